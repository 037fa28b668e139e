use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use wavclip_cli::args::{Cli, Command, EvalArgs, SynthArgs, TrainArgs, TransformArgs};
use wavclip_cli::output::Staged;
use wavclip_cli::{cmd_eval, cmd_synth, cmd_train, cmd_transform, error_line, exit_code, resolve_config};
use wavclip_core::{Error, Result};

fn stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_config(args.config.as_deref(), &args.flags.overrides())?;
    let outcome = cmd_train(&cfg)?;
    let last = outcome.report.epoch_loss.last().copied().unwrap_or(outcome.report.initial_loss);
    let mut msg = format!(
        "trained {} head on {} rows for {} epochs: loss {:.6} -> {:.6}\ncheckpoint: {}\ntrace: {}\n",
        cfg.head, outcome.train_rows, cfg.epochs, outcome.report.initial_loss, last, cfg.checkpoint_path, cfg.trace_path
    );
    if outcome.heldout_rows > 0 {
        msg.push_str(&format!("held out: {} rows -> {}\n", outcome.heldout_rows, cfg.heldout_path));
    }
    stdout(&msg)
}

fn eval(args: EvalArgs) -> Result<()> {
    let report = cmd_eval(&args.checkpoint, &args.files, args.pooling)?;
    let mut staged = Staged::new();
    if let Some(path) = &args.csv {
        staged.add(path, report.to_csv().as_bytes())?;
    }
    if let Some(path) = &args.text {
        staged.add(path, report.to_text().as_bytes())?;
    }
    staged.commit()?;
    if args.text.is_none() {
        stdout(&report.to_text())?;
    }
    Ok(())
}

fn transform(args: TransformArgs) -> Result<()> {
    let report = cmd_transform(&args.input, args.family)?;
    match &args.out {
        Some(path) => {
            let mut staged = Staged::new();
            staged.add(path, report.to_csv().as_bytes())?;
            staged.commit()?;
            stdout(&report.summary())
        }
        None => stdout(&report.to_csv()),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let ds = cmd_synth(args.n, args.dim, args.separation, args.seed, &args.output)?;
    stdout(&format!("wrote {} rows of dim {} to {}\n", ds.len(), ds.dim(), args.output.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Transform(a) => transform(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_code(e.class()) as u8)
        }
    }
}
