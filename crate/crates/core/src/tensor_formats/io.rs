//! Plain-text CANON format:
//!
//! ```text
//! CANON <d> <R> <n_1> ... <n_d>
//! <R weights>
//! <n_1 lines of R values>   (row i holds entry i of every mode-1 factor)
//! ...
//! <n_d lines of R values>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use faer::Mat;

use super::canonical::CanonicalTensor;
use crate::{Error, Result};

pub fn write_canon<W: Write>(mut out: W, t: &CanonicalTensor) -> Result<()> {
    write!(out, "CANON {} {}", t.order(), t.rank())?;
    for n in t.shape() {
        write!(out, " {n}")?;
    }
    writeln!(out)?;
    write_row(&mut out, t.weights().iter().copied())?;
    for f in t.factors() {
        for i in 0..f.nrows() {
            write_row(&mut out, (0..f.ncols()).map(|k| f[(i, k)]))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, vals: impl Iterator<Item = f64>) -> Result<()> {
    let mut first = true;
    for v in vals {
        if !first {
            out.write_all(b" ")?;
        }
        first = false;
        write!(out, "{v:.16e}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn read_canon<R: BufRead>(input: R) -> Result<CanonicalTensor> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
        }
    };
    let (ln, header) = next("header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() != Some(&"CANON") || toks.len() < 3 {
        return Err(Error::Parse { line: ln, msg: "expected `CANON <d> <R> <n_1> ... <n_d>`".into() });
    }
    let ints: Vec<usize> = toks[1..]
        .iter()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
    let (d, rank) = (ints[0], ints[1]);
    if ints.len() != d + 2 {
        return Err(Error::Parse { line: ln, msg: format!("expected {d} mode sizes") });
    }
    let shape = ints[2..].to_vec();
    let (ln, wline) = next("weights")?;
    let weights = parse_row(&wline, rank, ln)?;
    let mut factors = Vec::with_capacity(d);
    for &n in &shape {
        let mut f = Mat::zeros(n, rank);
        for i in 0..n {
            let (ln, line) = next("factor row")?;
            for (k, v) in parse_row(&line, rank, ln)?.into_iter().enumerate() {
                f[(i, k)] = v;
            }
        }
        factors.push(f);
    }
    if rank == 0 {
        return CanonicalTensor::zeros(&shape);
    }
    CanonicalTensor::from_normalized(&shape, weights, factors)
}

fn parse_row(line: &str, expected: usize, ln: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
    if vals.len() != expected {
        return Err(Error::Parse { line: ln, msg: format!("expected {expected} values, found {}", vals.len()) });
    }
    Ok(vals)
}

pub fn save_canon(path: impl AsRef<Path>, t: &CanonicalTensor) -> Result<()> {
    write_canon(BufWriter::new(File::create(path)?), t)
}

pub fn load_canon(path: impl AsRef<Path>) -> Result<CanonicalTensor> {
    read_canon(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_formats::canonical::random_canonical;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = StdRng::seed_from_u64(21);
        let a = random_canonical(&mut rng, &[4, 3, 5], 3);
        let mut buf = Vec::new();
        write_canon(&mut buf, &a).unwrap();
        let b = read_canon(&buf[..]).unwrap();
        assert_eq!(a.weights(), b.weights());
        for l in 0..3 {
            assert_eq!(a.factor(l), b.factor(l));
        }
    }

    #[test]
    fn zero_tensor_round_trip() {
        let z = CanonicalTensor::zeros(&[2, 3]).unwrap();
        let mut buf = Vec::new();
        write_canon(&mut buf, &z).unwrap();
        let b = read_canon(&buf[..]).unwrap();
        assert_eq!(b.rank(), 0);
        assert_eq!(b.shape(), &[2, 3]);
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "CANON 2 1 2 2\n1.0\n1.0\nx\n";
        match read_canon(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_canon("TUCKER 2\n".as_bytes()).is_err());
    }
}
