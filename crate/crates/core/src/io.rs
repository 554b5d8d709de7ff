//! Chain artifacts: events as JSON lines, skeletons as CSV.

use std::io::{BufRead, Write};

use crate::error::{Result, SuzzError};
use crate::sampler::{Event, Skeleton};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One `{"t","x","theta","flip"}` object per line.
pub fn write_events_jsonl<W: Write>(events: &[Event], mut w: W) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|err| SuzzError::Io(err.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Event = serde_json::from_str(&line).map_err(|err| SuzzError::Parse {
            line: i + 1,
            message: err.to_string(),
        })?;
        events.push(e);
    }
    Ok(events)
}

/// Header `t,x1..xd,theta1..thetad`, one row per skeleton point.
pub fn write_skeleton_csv<W: Write>(sk: &Skeleton, mut w: W) -> Result<()> {
    let d = sk.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("theta{i}")));
    writeln!(w, "{}", header.join(","))?;
    for ((t, x), th) in sk.t.iter().zip(&sk.x).zip(&sk.theta) {
        let mut row = vec![fmt17(*t)];
        row.extend(x.iter().map(|v| fmt17(*v)));
        row.extend(th.iter().map(i8::to_string));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_skeleton_csv<R: BufRead>(r: R, delta: f64) -> Result<Skeleton> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(SuzzError::Parse {
        line: 1,
        message: "empty skeleton file".into(),
    })??;
    let cols = header.split(',').count();
    if cols < 3 || (cols - 1) % 2 != 0 || !header.starts_with("t,") {
        return Err(SuzzError::Parse {
            line: 1,
            message: format!("unexpected skeleton header '{header}'"),
        });
    }
    let d = (cols - 1) / 2;
    let mut sk = Skeleton {
        delta,
        t: Vec::new(),
        x: Vec::new(),
        theta: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(SuzzError::Parse {
                line: lineno,
                message: format!("expected {cols} fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| SuzzError::Parse {
                line: lineno,
                message: format!("bad number '{s}': {e}"),
            })
        };
        sk.t.push(num(fields[0])?);
        sk.x.push(fields[1..=d].iter().map(|s| num(s)).collect::<Result<_>>()?);
        sk.theta.push(
            fields[d + 1..]
                .iter()
                .map(|s| {
                    s.trim().parse::<i8>().map_err(|e| SuzzError::Parse {
                        line: lineno,
                        message: format!("bad velocity '{s}': {e}"),
                    })
                })
                .collect::<Result<_>>()?,
        );
    }
    Ok(sk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MAX] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn skeleton_round_trip() {
        let sk = Skeleton {
            delta: 0.1,
            t: vec![0.0, 0.1],
            x: vec![vec![0.0, 1.0 / 3.0], vec![0.1, -2.0]],
            theta: vec![vec![1, -1], vec![-1, -1]],
        };
        let mut buf = Vec::new();
        write_skeleton_csv(&sk, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,theta1,theta2\n"));
        let back = read_skeleton_csv(buf.as_slice(), 0.1).unwrap();
        assert_eq!(back, sk);
    }

    #[test]
    fn events_round_trip_and_errors() {
        let events = vec![
            Event { t: 0.0, x: vec![0.0], theta: vec![1], flip: 0 },
            Event { t: 1.2345678901234567, x: vec![1.2345678901234567], theta: vec![-1], flip: 1 },
        ];
        let mut buf = Vec::new();
        write_events_jsonl(&events, &mut buf).unwrap();
        assert_eq!(read_events_jsonl(buf.as_slice()).unwrap(), events);
        let bad = b"{\"t\":0,\"x\":[0],\"theta\":[1],\"flip\":0}\n{oops}\n";
        match read_events_jsonl(&bad[..]) {
            Err(SuzzError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
