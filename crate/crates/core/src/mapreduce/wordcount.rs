//! The classic word-frequency job, used as an engine smoke test.

use super::{Emitter, Engine, JobSpec, JobStats, MrError};

/// Words are maximal runs of alphanumeric characters.
pub fn words(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

/// Counts word occurrences over `lines`; the result is sorted by word.
pub fn wordcount(engine: &Engine, lines: &[String]) -> Result<(Vec<(String, u64)>, JobStats), MrError> {
    let spec = JobSpec::new(
        "wordcount",
        |_, line: &String, out: &mut Emitter<String, u64>| {
            for w in words(line) {
                out.emit(w.to_string(), 1);
            }
            Ok(())
        },
        |word: &String, counts: Vec<u64>, out: &mut Vec<(String, u64)>| {
            out.push((word.clone(), counts.iter().sum()));
            Ok(())
        },
    )
    .input(0, &lines);
    let (mut counts, stats) = engine.run_job(spec)?;
    counts.sort_unstable();
    Ok((counts, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapreduce::EngineConfig;

    fn lines(text: &[&str]) -> Vec<String> {
        text.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hello_world_example() {
        let input = lines(&["Hello world.", "Hello MapReduce."]);
        for engine in [
            Engine::sequential(),
            Engine::new(EngineConfig::with_workers(4, 7)).unwrap(),
        ] {
            let (counts, stats) = wordcount(&engine, &input).unwrap();
            assert_eq!(
                counts,
                vec![("Hello".into(), 2), ("MapReduce".into(), 1), ("world".into(), 1)]
            );
            assert_eq!(stats.reduce_groups, 3);
        }
    }

    #[test]
    fn empty_and_repeated() {
        let (counts, _) = wordcount(&Engine::sequential(), &[]).unwrap();
        assert!(counts.is_empty());
        let (counts, _) = wordcount(&Engine::sequential(), &lines(&["ab ab ab", "ab", "ab"])).unwrap();
        assert_eq!(counts, vec![("ab".into(), 5)]);
    }
}
