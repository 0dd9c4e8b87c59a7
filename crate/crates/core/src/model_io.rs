//! Plain-text Kruskal model files.
//!
//! ```text
//! rank R dims I J K
//! lambda l_1 ... l_R
//! <I rows of the mode-1 factor, R values each>
//! <J rows of the mode-2 factor>
//! <K rows of the mode-3 factor>
//! ```
//!
//! Values are written as the shortest decimal that parses back to the same
//! `f64`.

use std::io::{BufRead, Write};

use crate::cpals::KruskalModel;
use crate::dense::FactorMatrix;
use crate::{Error, Result, ORDER};

pub fn write_model<W: Write>(model: &KruskalModel, mut w: W) -> Result<()> {
    let [i, j, k] = model.dims();
    writeln!(w, "rank {} dims {i} {j} {k}", model.rank)?;
    write!(w, "lambda")?;
    for l in &model.lambda {
        write!(w, " {l}")?;
    }
    writeln!(w)?;
    for f in &model.factors {
        for r in 0..f.rows {
            let row = f.row(r);
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: BufRead>(reader: R) -> Result<KruskalModel> {
    let mut lines = reader.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, line)) => Ok((n + 1, line?)),
            None => Err(Error::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let bad = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };

    let (n, header) = next("header")?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 || h[0] != "rank" || h[2] != "dims" {
        return Err(bad(n, "expected `rank R dims I J K`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad integer in header"));
    let rank = num(h[1])?;
    let dims = [num(h[3])?, num(h[4])?, num(h[5])?];

    let floats = |n: usize, s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(n, "bad value")))
            .collect()
    };

    let (n, lam) = next("lambda")?;
    let lam = lam.strip_prefix("lambda").ok_or_else(|| bad(n, "expected `lambda` line"))?;
    let lambda = floats(n, lam)?;
    if lambda.len() != rank {
        return Err(bad(n, "lambda length does not match rank"));
    }

    let mut factors = Vec::with_capacity(ORDER);
    for &d in &dims {
        let mut data = Vec::with_capacity(d * rank);
        for _ in 0..d {
            let (n, line) = next("factor row")?;
            let row = floats(n, &line)?;
            if row.len() != rank {
                return Err(bad(n, "factor row length does not match rank"));
            }
            data.extend(row);
        }
        factors.push(FactorMatrix::from_vec(d, rank, data)?);
    }
    let factors: [FactorMatrix; ORDER] = factors.try_into().expect("three factors");
    Ok(KruskalModel {
        rank,
        factors,
        lambda,
        fit: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpals::init_factors;
    use proptest::prelude::*;

    #[test]
    fn rejects_truncated_files() {
        assert!(read_model("rank 1 dims 1 1 1\nlambda 1\n0.5\n".as_bytes()).is_err());
        assert!(read_model("rank 2 dims 1 1 1\nlambda 1\n".as_bytes()).is_err());
        assert!(read_model("dims 1 1 1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trips_bitwise(i in 1usize..5, j in 1usize..5, k in 1usize..5, rank in 1usize..4, seed in any::<u64>(), scale in -1e6f64..1e6) {
            let factors = init_factors([i, j, k], rank, seed).map(|mut f| {
                f.data.iter_mut().for_each(|x| *x = (*x - 0.5) * scale);
                f
            });
            let model = KruskalModel { rank, factors, lambda: (0..rank).map(|r| r as f64 * 0.1 + scale).collect(), fit: 0.9 };
            let mut buf = Vec::new();
            write_model(&model, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            prop_assert_eq!(back.rank, rank);
            prop_assert_eq!(&back.lambda, &model.lambda);
            prop_assert_eq!(&back.factors, &model.factors);
        }
    }
}
