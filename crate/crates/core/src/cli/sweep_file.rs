//! Sweep description files.
//!
//! ```text
//! # comment
//! axis c1 = 0.5, 1, 2
//! axis lam = 0.1:10:5 log
//! runs 100
//! method tau epsilon=0.03
//! seed 7
//! t_end 20
//! samples 101
//! ```

use crate::ensemble::SweepAxis;

use super::MethodOptions;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepFile {
    pub axes: Vec<SweepAxis>,
    pub runs: Option<usize>,
    pub method: Option<MethodOptions>,
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, text: &str) -> Result<T, String> {
    text.trim()
        .parse()
        .map_err(|_| format!("line {line}: invalid {what} `{}`", text.trim()))
}

pub fn parse_sweep_file(text: &str) -> Result<SweepFile, String> {
    let mut out = SweepFile::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key {
            "axis" => out.axes.push(parse_axis(line_no, rest)?),
            "runs" => out.runs = Some(parse_num(line_no, "run count", rest)?),
            "seed" => out.seed = Some(parse_num(line_no, "seed", rest)?),
            "t_end" => out.t_end = Some(parse_num(line_no, "end time", rest)?),
            "samples" => out.samples = Some(parse_num(line_no, "sample count", rest)?),
            "method" => {
                let mut words = rest.split_whitespace();
                let name = words
                    .next()
                    .ok_or_else(|| format!("line {line_no}: missing method name"))?;
                let mut opts = MethodOptions::named(name).map_err(|e| format!("line {line_no}: {e}"))?;
                for word in words {
                    let (k, v) = word
                        .split_once('=')
                        .ok_or_else(|| format!("line {line_no}: expected key=value, got `{word}`"))?;
                    let v: f64 = parse_num(line_no, k, v)?;
                    opts.set(k, v).map_err(|e| format!("line {line_no}: {e}"))?;
                }
                out.method = Some(opts);
            }
            other => return Err(format!("line {line_no}: unknown directive `{other}`")),
        }
    }
    if out.axes.is_empty() {
        return Err("sweep file declares no axes".into());
    }
    Ok(out)
}

fn parse_axis(line: usize, rest: &str) -> Result<SweepAxis, String> {
    let (name, values) = rest
        .split_once('=')
        .ok_or_else(|| format!("line {line}: expected `axis <param> = <values>`"))?;
    let name = name.trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(format!("line {line}: invalid axis name `{name}`"));
    }
    let values = values.trim();
    if values.contains(':') {
        let (range, log) = match values.strip_suffix("log") {
            Some(r) => (r.trim(), true),
            None => (values, false),
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("line {line}: expected `lo:hi:n`, got `{range}`"));
        }
        let lo: f64 = parse_num(line, "range start", parts[0])?;
        let hi: f64 = parse_num(line, "range end", parts[1])?;
        let n: usize = parse_num(line, "range count", parts[2])?;
        let axis = if log {
            SweepAxis::log(name, lo, hi, n)
        } else {
            SweepAxis::linear(name, lo, hi, n)
        };
        axis.map_err(|e| format!("line {line}: {e}"))
    } else {
        let values = values
            .split(',')
            .map(|v| parse_num(line, "axis value", v))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(SweepAxis::list(name, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let f = parse_sweep_file(
            "# demo\naxis c1 = 0.5, 1, 2\naxis lam = 1,5\nruns 20\nmethod tau tau=0.01\nseed 9\nt_end 4\nsamples 3\n",
        )
        .unwrap();
        assert_eq!(f.axes.len(), 2);
        assert_eq!(f.axes[0].values, vec![0.5, 1.0, 2.0]);
        assert_eq!(f.runs, Some(20));
        assert_eq!(f.seed, Some(9));
        assert_eq!(f.method.unwrap().tau, Some(0.01));
        assert_eq!((f.t_end, f.samples), (Some(4.0), Some(3)));
    }

    #[test]
    fn ranges() {
        let f = parse_sweep_file("axis c = 0.1:1.0:10").unwrap();
        let v = &f.axes[0].values;
        assert_eq!(v.len(), 10);
        assert_eq!((v[0], v[9]), (0.1, 1.0));
        let f = parse_sweep_file("axis c = 1:100:3 log").unwrap();
        assert!((f.axes[0].values[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn errors_name_the_line() {
        assert!(parse_sweep_file("runs 3").unwrap_err().contains("no axes"));
        assert!(parse_sweep_file("axis c = 1\nfoo 2").unwrap_err().starts_with("line 2"));
        assert!(parse_sweep_file("axis c = 1:2").unwrap_err().contains("lo:hi:n"));
        assert!(parse_sweep_file("axis c = 1\nmethod warp")
            .unwrap_err()
            .contains("warp"));
    }
}
