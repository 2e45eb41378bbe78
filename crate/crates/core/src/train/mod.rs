//! Executable semantics of the CPSL learning protocol on a small dense network.
//!
//! A [`Stack`] of dense layers is cut into a device part and a server part.
//! Devices of a cluster run forward passes in parallel; the server concatenates
//! their smashed data, updates its part on the mean loss and returns each
//! device its own gradient rows. Device parts are merged with FedAvg and handed
//! to the next cluster. Vanilla SL, FL and centralized training serve as
//! references.

mod data;
mod model;
mod protocol;
mod tensor;

pub use data::{generate, partition_non_iid, BatchSampler, Dataset, DatasetSpec};
pub use model::{accuracy, fedavg, nll_loss, Activation, DenseLayer, LayerGrad, SplitModel, Stack, Trace};
pub use protocol::{
    backward_split, forward_device, forward_server_concat, run_cpsl_round, run_fl_round, run_sl_round, run_training,
    Federation, RoundMetrics, SplitGrads, TrainMetrics, TrainScheme, TrainerConfig,
};
pub use tensor::Matrix;
