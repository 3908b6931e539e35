//! Slow reference computation of the same H1 diagram.
//!
//! Enumerates every simplex up to dimension 2, builds the full boundary
//! matrix in one global filtration order, and runs the plain left-to-right
//! column reduction with no clearing and no per-dimension shortcuts. Kept
//! deliberately independent of the optimized path so the two can be checked
//! against each other; only suitable for small inputs.

use nalgebra::DMatrix;

use super::rips::{validate_distances, RipsThreshold};
use super::{enclosing_radius, is_prime, PersistenceDiagram, PersistencePair};
use crate::error::{Error, Result};

#[derive(Clone)]
struct Simplex {
    value: f64,
    vertices: Vec<u32>,
}

pub fn rips_persistence_h1_reference(
    dist: &DMatrix<f64>,
    field_char: u64,
    threshold: RipsThreshold,
) -> Result<PersistenceDiagram> {
    validate_distances(dist)?;
    if !is_prime(field_char) || field_char > (1 << 31) {
        return Err(Error::invalid(format!(
            "field characteristic must be a prime below 2^31, got {field_char}"
        )));
    }
    let p = field_char;
    let n = dist.nrows();
    let thr = match threshold {
        RipsThreshold::Enclosing => enclosing_radius(dist),
        RipsThreshold::Value(v) => v,
    };

    let mut simplices: Vec<Simplex> = Vec::new();
    for i in 0..n as u32 {
        simplices.push(Simplex {
            value: 0.0,
            vertices: vec![i],
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if dist[(i, j)] <= thr {
                simplices.push(Simplex {
                    value: dist[(i, j)],
                    vertices: vec![i as u32, j as u32],
                });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let value = dist[(i, j)].max(dist[(i, k)]).max(dist[(j, k)]);
                if dist[(i, j)] <= thr && dist[(i, k)] <= thr && dist[(j, k)] <= thr {
                    simplices.push(Simplex {
                        value,
                        vertices: vec![i as u32, j as u32, k as u32],
                    });
                }
            }
        }
    }
    simplices.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.vertices.len().cmp(&b.vertices.len()))
            .then(a.vertices.cmp(&b.vertices))
    });

    // Position of each simplex in the global order.
    let mut index = std::collections::HashMap::new();
    for (pos, s) in simplices.iter().enumerate() {
        index.insert(s.vertices.clone(), pos);
    }

    // Full reduction. Columns hold (global row, coefficient), sorted by row.
    let m = simplices.len();
    let mut low_owner: Vec<Option<usize>> = vec![None; m];
    let mut columns: Vec<Vec<(usize, u64)>> = Vec::with_capacity(m);
    let mut positive = vec![false; m];
    let mut death_of: Vec<Option<usize>> = vec![None; m];

    for (pos, s) in simplices.iter().enumerate() {
        let mut col: Vec<(usize, u64)> = Vec::new();
        if s.vertices.len() > 1 {
            for (skip, sign_even) in (0..s.vertices.len()).map(|d| (d, d % 2 == 0)) {
                let face: Vec<u32> = s
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(v, _)| v != skip)
                    .map(|(_, &x)| x)
                    .collect();
                let coeff = if sign_even { 1 } else { p - 1 };
                col.push((index[&face], coeff));
            }
            col.sort_by_key(|&(row, _)| row);
        }
        while let Some(&(low, coeff)) = col.last() {
            match low_owner[low] {
                None => {
                    low_owner[low] = Some(pos);
                    death_of[low] = Some(pos);
                    break;
                }
                Some(other) => {
                    let pivot = &columns[other];
                    let pivot_coeff = pivot.last().unwrap().1;
                    let factor = (coeff * modinv(pivot_coeff, p)) % p;
                    col = column_sub(&col, pivot, factor, p);
                }
            }
        }
        if col.is_empty() {
            positive[pos] = true;
        }
        columns.push(col);
    }

    let mut pairs = Vec::new();
    for (pos, s) in simplices.iter().enumerate() {
        if s.vertices.len() != 2 || !positive[pos] {
            continue;
        }
        match death_of[pos] {
            Some(killer) => {
                let death = simplices[killer].value;
                if death > s.value {
                    pairs.push(PersistencePair {
                        birth: s.value,
                        death,
                    });
                }
            }
            None => pairs.push(PersistencePair {
                birth: s.value,
                death: f64::INFINITY,
            }),
        }
    }
    Ok(PersistenceDiagram::from_pairs(pairs, p))
}

/// `a - factor * b` over Z_p on sorted sparse columns.
fn column_sub(a: &[(usize, u64)], b: &[(usize, u64)], factor: u64, p: u64) -> Vec<(usize, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut ia, mut ib) = (0, 0);
    while ia < a.len() || ib < b.len() {
        let (row, coeff) = match (a.get(ia), b.get(ib)) {
            (Some(&(ra, ca)), Some(&(rb, cb))) if ra == rb => {
                ia += 1;
                ib += 1;
                (ra, (ca + p - cb * factor % p) % p)
            }
            (Some(&(ra, ca)), Some(&(rb, _))) if ra < rb => {
                ia += 1;
                (ra, ca)
            }
            (Some(_), Some(&(rb, cb))) | (None, Some(&(rb, cb))) => {
                ib += 1;
                (rb, (p - cb * factor % p) % p)
            }
            (Some(&(ra, ca)), None) => {
                ia += 1;
                (ra, ca)
            }
            (None, None) => unreachable!(),
        };
        if coeff != 0 {
            out.push((row, coeff));
        }
    }
    out
}

fn modinv(a: u64, p: u64) -> u64 {
    // Fermat.
    let mut acc = 1u64;
    let mut base = a % p;
    let mut exp = p - 2;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}
