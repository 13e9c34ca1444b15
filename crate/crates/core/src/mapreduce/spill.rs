//! Sorted on-disk runs for map output that exceeds the in-memory threshold.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::codec::Datum;

/// A run of key-sorted records in an anonymous temporary file.
#[derive(Debug)]
pub(crate) struct Run {
    file: File,
    len: usize,
}

impl Run {
    /// Writes `records`, which must already be sorted by key.
    pub(crate) fn write<K: Datum, V: Datum>(dir: &Path, records: &[(K, V)]) -> io::Result<Run> {
        let file = tempfile::tempfile_in(dir)?;
        let mut w = BufWriter::new(file);
        let mut buf = Vec::new();
        for (k, v) in records {
            buf.clear();
            k.encode(&mut buf);
            let klen = buf.len();
            v.encode(&mut buf);
            w.write_all(&(klen as u32).to_be_bytes())?;
            w.write_all(&((buf.len() - klen) as u32).to_be_bytes())?;
            w.write_all(&buf)?;
        }
        let mut file = w.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(0))?;
        Ok(Run {
            file,
            len: records.len(),
        })
    }

    pub(crate) fn into_reader<K: Datum, V: Datum>(self) -> RunReader<K, V> {
        RunReader {
            reader: BufReader::new(self.file),
            remaining: self.len,
            buf: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }
}

pub(crate) struct RunReader<K, V> {
    reader: BufReader<File>,
    remaining: usize,
    buf: Vec<u8>,
    _marker: std::marker::PhantomData<fn() -> (K, V)>,
}

impl<K: Datum, V: Datum> Iterator for RunReader<K, V> {
    type Item = io::Result<(K, V)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.read_one())
    }
}

impl<K: Datum, V: Datum> RunReader<K, V> {
    fn read_one(&mut self) -> io::Result<(K, V)> {
        let mut lens = [0u8; 8];
        self.reader.read_exact(&mut lens)?;
        let klen = u32::from_be_bytes(lens[..4].try_into().unwrap()) as usize;
        let vlen = u32::from_be_bytes(lens[4..].try_into().unwrap()) as usize;
        self.buf.resize(klen + vlen, 0);
        self.reader.read_exact(&mut self.buf)?;
        let bad = |_| io::Error::new(io::ErrorKind::InvalidData, "corrupt spill run");
        let mut kslice = &self.buf[..klen];
        let key = K::decode(&mut kslice).map_err(bad)?;
        let mut vslice = &self.buf[klen..];
        let value = V::decode(&mut vslice).map_err(bad)?;
        Ok((key, value))
    }
}

type Source<'a, K, V> = Box<dyn Iterator<Item = io::Result<(K, V)>> + 'a>;

/// K-way merge of key-sorted sources, yielding one `(key, values)` group at a time.
pub(crate) struct GroupedMerge<'a, K, V> {
    sources: Vec<Source<'a, K, V>>,
    heads: Vec<Option<V>>,
    heap: BinaryHeap<Reverse<(K, usize)>>,
}

impl<'a, K: Ord, V> GroupedMerge<'a, K, V> {
    pub(crate) fn new(sources: Vec<Source<'a, K, V>>) -> io::Result<Self> {
        let mut m = GroupedMerge {
            heads: (0..sources.len()).map(|_| None).collect(),
            sources,
            heap: BinaryHeap::new(),
        };
        for i in 0..m.sources.len() {
            m.advance(i)?;
        }
        Ok(m)
    }

    fn advance(&mut self, i: usize) -> io::Result<()> {
        if let Some(next) = self.sources[i].next() {
            let (k, v) = next?;
            self.heads[i] = Some(v);
            self.heap.push(Reverse((k, i)));
        }
        Ok(())
    }

    pub(crate) fn next_group(&mut self) -> io::Result<Option<(K, Vec<V>)>> {
        let Some(Reverse((key, i))) = self.heap.pop() else {
            return Ok(None);
        };
        let mut values = vec![self.heads[i].take().expect("head present")];
        self.advance(i)?;
        while let Some(Reverse((k, _))) = self.heap.peek() {
            if *k != key {
                break;
            }
            let Reverse((_, j)) = self.heap.pop().unwrap();
            values.push(self.heads[j].take().expect("head present"));
            self.advance(j)?;
        }
        Ok(Some((key, values)))
    }
}
