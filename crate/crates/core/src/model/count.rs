//! Parameter and multiply-add accounting. Totals are compared against the
//! published reference figures by the CLI and the acceptance suite.

use crate::model::{Model, Variant};
use crate::scalar::Scalar;

/// Published reference figures for the default architecture.
pub const REFERENCE_TOTAL_PARAMS: u64 = 4_991_554;
pub const REFERENCE_GFLOPS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRow {
    pub layer: String,
    pub trainable: u64,
    pub non_trainable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopRow {
    pub layer: String,
    pub macs: u64,
    pub flops: u64,
}

impl<S: Scalar> Model<S> {
    /// Per-layer parameter counts plus (trainable, non_trainable) totals.
    /// Rows are element counts of the stored tensors; the closed forms are
    /// k^2*C_in + C_in*C_out + C_out + 2*C_out trainable and 2*C_out running
    /// statistics per block, D*K + K for the classifier.
    pub fn count_params(&self) -> (Vec<ParamRow>, u64, u64) {
        let mut rows = Vec::new();
        for b in self.blocks_for_count() {
            rows.push(ParamRow {
                layer: b.name.clone(),
                trainable: b.trainable_params() as u64,
                non_trainable: b.stat_params() as u64,
            });
        }
        rows.push(ParamRow {
            layer: "fc".into(),
            trainable: (self.fc_weight.len() + self.fc_bias.len()) as u64,
            non_trainable: 0,
        });
        let trainable = rows.iter().map(|r| r.trainable).sum();
        let non_trainable = rows.iter().map(|r| r.non_trainable).sum();
        (rows, trainable, non_trainable)
    }

    /// Per-layer multiply-add counts for one image, with FLOPs = 2 MACs at
    /// each output position. Elementwise and pooling layers contribute none.
    pub fn count_flops(&self) -> (Vec<FlopRow>, u64, u64) {
        let plan = self.plan();
        let mut rows = Vec::new();
        for (i, b) in self.encoder.iter().enumerate() {
            // stride-1 same convolution runs at the stage's input extent
            let (h, w) = plan.encoder_spatial[i];
            let macs = b.macs(h, w);
            rows.push(FlopRow {
                layer: b.name.clone(),
                macs,
                flops: 2 * macs,
            });
        }
        if self.config.variant != Variant::EncoderOnly {
            for (j, b) in self.decoder.iter().enumerate() {
                let (h, w) = plan.decoder_spatial[j];
                let macs = b.macs(h, w);
                rows.push(FlopRow {
                    layer: b.name.clone(),
                    macs,
                    flops: 2 * macs,
                });
            }
            if let Some(b) = &self.branch5 {
                let (h, w) = *plan.decoder_spatial.last().expect("decoder has stages");
                let macs = b.macs(h, w);
                rows.push(FlopRow {
                    layer: b.name.clone(),
                    macs,
                    flops: 2 * macs,
                });
            }
        }
        let fc_macs = (self.fc_weight.len()) as u64;
        rows.push(FlopRow {
            layer: "fc".into(),
            macs: fc_macs,
            flops: 2 * fc_macs,
        });
        let macs = rows.iter().map(|r| r.macs).sum();
        let flops = rows.iter().map(|r| r.flops).sum();
        (rows, macs, flops)
    }

    fn blocks_for_count(&self) -> Vec<&crate::layers::sepconv::SepConvBlock<S>> {
        let mut all: Vec<_> = self.encoder.iter().collect();
        all.extend(self.decoder.iter());
        if let Some(b) = &self.branch5 {
            all.push(b);
        }
        all
    }
}
