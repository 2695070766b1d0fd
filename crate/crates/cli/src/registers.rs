//! `registers`: apply writes to a register file and print it.

use anyhow::Result;
use tnn_accel::config::RegisterFile;

use crate::args::load_model;
use crate::error::InputError;
use crate::RegistersArgs;

pub fn run(a: RegistersArgs) -> Result<()> {
    let mut rf = RegisterFile::new(a.tiles.config());
    if let Some(path) = &a.model {
        rf.load(&load_model(path)?)?;
    }
    for w in &a.writes {
        let (name, value) = w
            .split_once('=')
            .ok_or_else(|| InputError::msg(format!("expected NAME=VALUE, got `{w}`")))?;
        let value: u64 = value
            .trim()
            .parse()
            .map_err(|_| InputError::msg(format!("register value must be an unsigned integer, got `{value}`")))?;
        rf.write(name.trim(), value)?;
    }

    if a.emit_model {
        crate::emit(format_args!("{}\n", rf.model_config()?.to_json()))?;
    }
    if a.show || !a.emit_model {
        for (reg, v) in rf.dump() {
            let line = format!("{:<11}{v}", reg.name());
            if a.emit_model {
                eprintln!("{line}");
            } else {
                crate::emit(format_args!("{line}\n"))?;
            }
        }
    }
    Ok(())
}
