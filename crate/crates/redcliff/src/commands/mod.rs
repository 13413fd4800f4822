//! Subcommands. Each exposes clap `Args` and a `run` usable from tests.

use clap::Subcommand;

use crate::error::Result;

pub mod combine;
pub mod eval;
pub mod gen_synth;
pub mod render;
pub mod report;
pub mod train;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic multi-state systems and labelled datasets.
    GenSynth(gen_synth::GenSynthArgs),
    /// Mix multi-fold datasets, one output per dominant fold.
    Combine(combine::CombineArgs),
    /// Pretrain, acclimate and jointly train a model.
    Train(train::TrainArgs),
    /// Score a checkpoint against ground truth and emit heatmaps.
    Eval(eval::EvalArgs),
    /// Aggregate evaluation reports.
    Report(report::ReportArgs),
    /// Regenerate SVG heatmaps from a report.json.
    Render(render::RenderArgs),
}

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenSynth(a) => gen_synth::run(a).map(|_| ()),
        Command::Combine(a) => combine::run(a).map(|_| ()),
        Command::Train(a) => train::run(a).map(|_| ()),
        Command::Eval(a) => eval::run(a).map(|_| ()),
        Command::Report(a) => report::run(a).map(|_| ()),
        Command::Render(a) => render::run(a).map(|_| ()),
    }
}
