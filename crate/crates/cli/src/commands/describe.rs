//! `foleygen describe`: architecture summary and exact parameter counts for
//! a flag-specified config or an existing checkpoint.

use std::path::PathBuf;

use foleygen_core::error::Result;
use foleygen_core::train::load_checkpoint_dir;
use foleygen_core::unet::UNet;

use crate::args::{KvConfig, ModelArgs};

#[derive(Debug, clap::Args)]
pub struct DescribeArgs {
    /// Describe the model stored in this checkpoint directory
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Comma-separated class names for a flag-specified config
    #[arg(long)]
    pub class_names: Option<String>,

    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(a: &DescribeArgs, file: &KvConfig) -> Result<()> {
    let mut model = match &a.checkpoint {
        Some(dir) => load_checkpoint_dir(dir)?.0,
        None => {
            let class_names: Vec<String> = a
                .class_names
                .as_deref()
                .or(file.get_raw("class_names"))
                .unwrap_or("thump,tick,wash")
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let cfg = a.model.to_config(file, class_names)?;
            UNet::<f32>::new(cfg, 0)?
        }
    };
    print!("{}", model.describe());
    Ok(())
}
