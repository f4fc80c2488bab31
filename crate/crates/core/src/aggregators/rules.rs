//! Distance- and order-statistic-based aggregation rules.

use crate::error::{Error, Result};
use crate::vector::{dist_sq, DenseVector};

fn check_nonempty(updates: &[DenseVector]) -> Result<usize> {
    let dim = updates.first().map(DenseVector::dim).ok_or_else(|| Error::config("no updates to aggregate"))?;
    crate::vector::check_dims(updates, dim)?;
    Ok(dim)
}

fn mean_of_indices(updates: &[DenseVector], ids: impl Iterator<Item = usize>, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut count = 0usize;
    for i in ids {
        for (o, v) in out.iter_mut().zip(updates[i].as_slice()) {
            *o += v;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub(crate) fn average_into(updates: &[DenseVector], out: &mut [f64]) {
    mean_of_indices(updates, 0..updates.len(), out)
}

/// Plain mean of all updates.
pub fn average(updates: &[DenseVector]) -> Result<DenseVector> {
    let dim = check_nonempty(updates)?;
    let mut out = vec![0.0; dim];
    average_into(updates, &mut out);
    DenseVector::from_computed(out, "average")
}

/// Krum scores: for each update, the sum of squared distances to its `n-b-1`
/// nearest other updates.
pub fn krum_scores(updates: &[DenseVector], b: usize) -> Result<Vec<f64>> {
    check_nonempty(updates)?;
    let n = updates.len();
    if n < b + 2 {
        return Err(Error::config(format!("krum needs n - b - 1 >= 1 (n = {n}, b = {b})")));
    }
    let neighbours = n - b - 1;
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist_sq(updates[i].as_slice(), updates[j].as_slice());
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row[..neighbours].iter().sum()
        })
        .collect())
}

/// Worker indices ordered by Krum score, ties by smaller index.
fn krum_order(updates: &[DenseVector], b: usize) -> Result<Vec<usize>> {
    let scores = krum_scores(updates, b)?;
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    Ok(order)
}

pub fn krum(updates: &[DenseVector], b: usize) -> Result<DenseVector> {
    multi_krum(updates, b, 1)
}

/// Mean of the `q` lowest-score updates.
pub fn multi_krum(updates: &[DenseVector], b: usize, q: usize) -> Result<DenseVector> {
    let n = updates.len();
    if q == 0 || q > n {
        return Err(Error::config(format!("multi-krum needs 1 <= q <= n (q = {q}, n = {n})")));
    }
    let order = krum_order(updates, b)?;
    let mut out = vec![0.0; updates[0].dim()];
    mean_of_indices(updates, order[..q].iter().copied(), &mut out);
    DenseVector::from_computed(out, "multi-krum")
}

fn coordinatewise(updates: &[DenseVector], f: impl Fn(&[f64]) -> f64) -> Result<DenseVector> {
    let dim = check_nonempty(updates)?;
    let mut column = vec![0.0; updates.len()];
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        for (c, u) in column.iter_mut().zip(updates) {
            *c = u.as_slice()[k];
        }
        column.sort_by(f64::total_cmp);
        out.push(f(&column));
    }
    DenseVector::from_computed(out, "coordinatewise rule")
}

/// Coordinatewise median; midpoint of the central pair for even n.
pub fn cwm(updates: &[DenseVector]) -> Result<DenseVector> {
    coordinatewise(updates, |s| {
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    })
}

/// Coordinatewise mean after dropping the `q` smallest and `q` largest values.
pub fn cwtm(updates: &[DenseVector], q: usize) -> Result<DenseVector> {
    let n = updates.len();
    if q == 0 || n < 2 * q + 1 {
        return Err(Error::config(format!("trimmed mean needs q >= 1 and n - 2q >= 1 (q = {q}, n = {n})")));
    }
    coordinatewise(updates, |s| s[q..n - q].iter().sum::<f64>() / (n - 2 * q) as f64)
}

/// Smoothed Weiszfeld iterations started from the mean.
pub fn geometric_median(updates: &[DenseVector], iters: usize, nu: f64) -> Result<DenseVector> {
    let dim = check_nonempty(updates)?;
    if iters == 0 || !(nu > 0.0) {
        return Err(Error::config(format!("geometric median needs iters >= 1 and nu > 0 (iters = {iters}, nu = {nu})")));
    }
    let mut v = vec![0.0; dim];
    average_into(updates, &mut v);
    let mut next = vec![0.0; dim];
    for _ in 0..iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut total = 0.0;
        for u in updates {
            let w = 1.0 / dist_sq(&v, u.as_slice()).sqrt().max(nu);
            total += w;
            for (x, ui) in next.iter_mut().zip(u.as_slice()) {
                *x += w * ui;
            }
        }
        for (vi, x) in v.iter_mut().zip(&next) {
            *vi = x / total;
        }
    }
    DenseVector::from_computed(v, "geometric median")
}
