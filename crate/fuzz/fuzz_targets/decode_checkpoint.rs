#![no_main]

use csso::model::CssoModel;
use csso::nn::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let _ = CssoModel::from_checkpoint(&ckpt);
    }
});
