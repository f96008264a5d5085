use serde::Serialize;

/// Fully resolved job description, echoed into every output for provenance.
///
/// Fields a command does not use are echoed at their defaults, so the schema
/// is the same for every command and identical invocations produce
/// byte-identical documents.
#[derive(Debug, Clone, Serialize)]
pub struct JobConfig {
    pub command: String,
    pub chain: Option<String>,
    pub rho0: Option<String>,
    pub rho1: Option<String>,
    /// Mean selector: "log", "geometric", or "power:<alpha>".
    pub mean: String,
    /// Density files hold probability vectors and are divided by pi.
    pub as_measure: bool,
    /// Path discretisation: intervals for dist, trajectory samples for
    /// geodesic, geodesic resolution for ricci.
    pub intervals: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub format: String,
    /// Side dump of the tabular payload, independent of `format`.
    pub csv: Option<String>,
    /// Command-specific knobs not covered by the common fields.
    pub params: serde_json::Value,
}

impl JobConfig {
    /// Baseline used by every command before filling in its own fields.
    pub fn base(command: &str) -> Self {
        JobConfig {
            command: command.to_string(),
            chain: None,
            rho0: None,
            rho1: None,
            mean: "log".to_string(),
            as_measure: false,
            intervals: 16,
            tol: 1e-7,
            max_iters: 600,
            seed: 42,
            t_grid: Vec::new(),
            format: "json".to_string(),
            csv: None,
            params: serde_json::Value::Object(serde_json::Map::new()),
        }
    }
}
