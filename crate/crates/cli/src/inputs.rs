use std::path::Path;

use entroflow::{Density, MarkovChain};

use crate::commands::CliError;

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_chain(path: &Path) -> Result<MarkovChain, CliError> {
    Ok(MarkovChain::from_json_str(&read(path)?)?)
}

pub fn load_density(
    chain: &MarkovChain,
    path: &Path,
    as_measure: bool,
) -> Result<Density, CliError> {
    Ok(Density::from_json_str(chain, &read(path)?, as_measure)?)
}
