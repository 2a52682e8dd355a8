//! A small 1-D U-Net denoiser with a transformer-encoder bottleneck.
//!
//! Five kernel-8 convolutions (stride 1, then four stride-2) take a
//! `[batch, 1, d]` window to a `d/16 x 16*base` latent. One post-norm
//! transformer encoder layer runs on the latent and is combined with it as
//! a sigmoid mask ([`Bottleneck::Rm`]), used directly ([`Bottleneck::Dm`]) or
//! skipped ([`Bottleneck::Identity`]). Four transposed-convolution modules
//! with concatenated skip connections and a final transposed convolution
//! bring it back to `[batch, 1, d]`.

pub mod attention;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use attention::{attention, positional_encoding, AttentionHead, TransformerParams};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use io::{load_params, read_params, save_params};
pub use model::{backward, forward, Bottleneck, ForwardCache, Gradients, ModelConfig, ModelParams, Pass};
pub use optim::{AdamState, LrSchedule};
pub use tensor::Tensor;
pub use train::{enhance, examples_from_manifest, l1_loss, train, windows, EarlyStopping, Example, TrainOptions, TrainOutcome};
