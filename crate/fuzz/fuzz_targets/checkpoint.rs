#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::meta_learner::checkpoint::Checkpoint;
use mlec::meta_learner::MetaLearner;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&c.encode()).expect("re-encoded checkpoint decodes"), c);
        let _ = MetaLearner::from_checkpoint(&c);
    }
});
