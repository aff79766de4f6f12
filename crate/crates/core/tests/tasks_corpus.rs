use std::collections::BTreeMap;

use kstep::seqmdp::Vocabulary;
use kstep::tasks::{parse_corpus, read_corpus, write_corpus, MarkovChain, Task, TaskSampler, SEPARATOR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bigram_frequencies_match_chain() {
    let vocab = Vocabulary::with_size(6).unwrap();
    let chain = MarkovChain::random(vocab, 1, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for _ in 0..10_000 {
        let seq = chain.sample(1_000, &mut rng);
        let mut prev = vocab.bos();
        for &tok in &seq {
            counts.entry(prev).or_insert_with(|| vec![0.0; 6])[tok] += 1.0;
            prev = tok;
        }
    }
    for (prev, row) in counts {
        let n: f64 = row.iter().sum();
        let target = chain.row(&[prev]);
        let tv: f64 = row.iter().zip(target).map(|(c, p)| (c / n - p).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.05, "context {prev}: tv {tv} over {n} transitions");
    }
}

#[test]
fn copy_and_reverse_sequences() {
    let vocab = Vocabulary::with_size(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (task, flip) in [(Task::Copy { length: 3 }, false), (Task::Reverse { length: 3 }, true)] {
        let sampler = TaskSampler::new(task, vocab).unwrap();
        for _ in 0..50 {
            let seq = sampler.sample_sequence(16, &mut rng);
            assert_eq!(seq.len(), 8);
            assert_eq!(seq[3], SEPARATOR);
            let mut src = seq[..3].to_vec();
            if flip {
                src.reverse();
            }
            assert_eq!(&seq[4..7], &src[..]);
            assert_eq!(seq[7], vocab.eos());
            let state = sampler.input_state(&seq).unwrap();
            assert_eq!(state.source(), &seq[..4]);
        }
    }
}

#[test]
fn corpus_file_roundtrip() {
    let vocab = Vocabulary::with_size(5).unwrap();
    let sampler = TaskSampler::new(
        Task::MarkovChain {
            order: 1,
            transition_seed: 3,
        },
        vocab,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let corpus: Vec<_> = (0..20).map(|_| sampler.sample_sequence(10, &mut rng)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    write_corpus(&path, &corpus).unwrap();
    assert_eq!(read_corpus(&path, vocab).unwrap(), corpus);
    let single = dir.path().join("one.txt");
    write_corpus(&single, &corpus[..1]).unwrap();
    assert_eq!(std::fs::read_to_string(&single).unwrap().lines().count(), 1);
}

#[test]
fn corpus_errors() {
    let vocab = Vocabulary::with_size(5).unwrap();
    assert!(parse_corpus("", vocab).is_err());
    assert!(parse_corpus("2 3 4\n", vocab).is_err());
    assert!(parse_corpus("2 9 1\n", vocab).is_err());
    let err = read_corpus(std::path::Path::new("/nonexistent/corpus.txt"), vocab).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/corpus.txt"));
}
