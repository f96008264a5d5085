use std::path::Path;

use serde::Serialize;

use crate::commands::CliError;
use crate::config::JobConfig;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'a str,
    config: &'a JobConfig,
    result: &'a T,
}

/// Tabular payload with versioned columns, fixed per schema (path dumps add
/// one `rho:<state>` column per state, in chain order). Rendered as CSV
/// behind a comment header carrying the schema tag and the resolved config.
pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, config: &JobConfig) -> String {
        let mut out = String::new();
        out.push_str("# schema: ");
        out.push_str(self.schema);
        out.push('\n');
        out.push_str("# config: ");
        out.push_str(&serde_json::to_string(config).expect("config serializes"));
        out.push('\n');
        push_record(&mut out, &self.columns);
        for row in &self.rows {
            push_record(&mut out, row);
        }
        out
    }
}

fn push_record(out: &mut String, fields: &[String]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&csv_field(field));
    }
    out.push('\n');
}

/// Quote a field only when it contains a delimiter, quote, or newline.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Print the result in the requested format and honour the CSV side dump.
pub fn emit<T: Serialize>(
    config: &JobConfig,
    schema: &'static str,
    result: &T,
    table: &Table,
) -> Result<(), CliError> {
    match config.format.as_str() {
        "csv" => print!("{}", table.render(config)),
        _ => {
            let env = Envelope {
                schema,
                config,
                result,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&env).expect("output serializes")
            );
        }
    }
    if let Some(path) = &config.csv {
        std::fs::write(Path::new(path), table.render(config)).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Structured failure document on stdout plus a human line on stderr.
pub fn emit_error(config: &JobConfig, kind: &'static str, err: &entroflow::Error) {
    #[derive(Serialize)]
    struct Body<'a> {
        kind: &'a str,
        message: String,
    }
    #[derive(Serialize)]
    struct ErrorEnvelope<'a> {
        schema: &'a str,
        config: &'a JobConfig,
        error: Body<'a>,
    }
    let doc = ErrorEnvelope {
        schema: "entroflow/error@v1",
        config,
        error: Body {
            kind,
            message: err.to_string(),
        },
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("error serializes")
    );
    eprintln!("error: {err}");
}
