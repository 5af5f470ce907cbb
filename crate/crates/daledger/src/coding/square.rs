//! The 2k×2k extended data square and its reconstruction.

use super::{rs::LineCodec, Axis, CodingError, Share, MAX_SQUARE_SIDE};
use crate::nmt::{NamespaceId, NamespaceTree, NamespacedDigest, NAMESPACE_SIZE};
use rayon::prelude::*;
use thiserror::Error;

/// Tree label of the cell at `(row, col)`: original cells self-describe via
/// their namespace prefix, everything outside the original quadrant is parity.
pub fn cell_label(k: usize, row: usize, col: usize, bytes: &[u8]) -> NamespaceId {
    if row < k && col < k {
        NamespaceId::from_bytes(bytes[..NAMESPACE_SIZE].try_into().unwrap())
    } else {
        NamespaceId::PARITY
    }
}

fn build_line_tree(
    k: usize,
    axis: Axis,
    index: usize,
    cells: &[Vec<u8>],
) -> Result<NamespaceTree, CodingError> {
    let leaves = cells
        .iter()
        .enumerate()
        .map(|(pos, bytes)| {
            let (r, c) = match axis {
                Axis::Row => (index, pos),
                Axis::Col => (pos, index),
            };
            Share {
                label: cell_label(k, r, c, bytes),
                bytes: bytes.clone(),
            }
            .as_leaf()
        })
        .collect();
    NamespaceTree::build(leaves, usize::MAX)
        .map_err(|_| CodingError::Invalid("line cells are not namespace-ordered"))
}

/// A partially known square: the input to [`reconstruct`].
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub k: usize,
    /// `2k × 2k` cells in row-major order; `None` = withheld/unknown.
    pub cells: Vec<Option<Vec<u8>>>,
}

impl CellGrid {
    pub fn side(&self) -> usize {
        2 * self.k
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&Vec<u8>> {
        self.cells[row * self.side() + col].as_ref()
    }

    pub fn set(&mut self, row: usize, col: usize, bytes: Vec<u8>) {
        let side = self.side();
        self.cells[row * side + col] = Some(bytes);
    }

    pub fn known(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Fully present, committed square: original data in the top-left quadrant in
/// namespace order, parity elsewhere, one namespaced root per row and column.
#[derive(Debug, Clone)]
pub struct ExtendedDataSquare {
    k: usize,
    payload_size: usize,
    cells: Vec<Share>, // row-major, 4k²
    row_roots: Vec<NamespacedDigest>,
    col_roots: Vec<NamespacedDigest>,
}

impl ExtendedDataSquare {
    /// Extends original-data shares into the full square. The side is padded
    /// up to a power of two with reserved empty shares; rows are extended
    /// first, then all 2k columns.
    pub fn extend(original: Vec<Share>, payload_size: usize) -> Result<Self, CodingError> {
        let share_size = NAMESPACE_SIZE + payload_size;
        if original.iter().any(|s| s.bytes.len() != share_size) {
            return Err(CodingError::Invalid("original shares have inconsistent size"));
        }
        let count = original.len().max(1);
        let mut k = 1usize;
        while k * k < count {
            k *= 2;
        }
        if k > MAX_SQUARE_SIDE {
            return Err(CodingError::SquareTooLarge { needed: k });
        }
        let codec = LineCodec::new(k)?;
        let side = 2 * k;

        let mut padded = original;
        padded.resize(k * k, Share::pad(payload_size));

        // rows first: each original row gains k parity cells on the right
        let extended_rows: Vec<Vec<Vec<u8>>> = (0..k)
            .into_par_iter()
            .map(|r| {
                let data: Vec<&[u8]> = padded[r * k..(r + 1) * k]
                    .iter()
                    .map(|s| s.bytes.as_slice())
                    .collect();
                let parity = codec.extend(&data)?;
                let mut row: Vec<Vec<u8>> = data.into_iter().map(<[u8]>::to_vec).collect();
                row.extend(parity);
                Ok(row)
            })
            .collect::<Result<_, CodingError>>()?;

        // then every column of the widened square grows downward
        let lower: Vec<Vec<Vec<u8>>> = (0..side)
            .into_par_iter()
            .map(|c| {
                let col: Vec<&[u8]> = (0..k).map(|r| extended_rows[r][c].as_slice()).collect();
                codec.extend(&col)
            })
            .collect::<Result<_, CodingError>>()?;

        let mut cells = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let bytes = if r < k {
                    extended_rows[r][c].clone()
                } else {
                    lower[c][r - k].clone()
                };
                cells.push(Share {
                    label: cell_label(k, r, c, &bytes),
                    bytes,
                });
            }
        }

        let (row_roots, col_roots) = compute_roots(k, &cells)?;
        Ok(Self { k, payload_size, cells, row_roots, col_roots })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn side(&self) -> usize {
        2 * self.k
    }

    pub fn payload_size(&self) -> usize {
        self.payload_size
    }

    pub fn share_size(&self) -> usize {
        NAMESPACE_SIZE + self.payload_size
    }

    /// Total bytes held in the square.
    pub fn total_bytes(&self) -> usize {
        self.cells.len() * self.share_size()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Share {
        &self.cells[row * self.side() + col]
    }

    pub fn cells(&self) -> &[Share] {
        &self.cells
    }

    pub fn row_roots(&self) -> &[NamespacedDigest] {
        &self.row_roots
    }

    pub fn col_roots(&self) -> &[NamespacedDigest] {
        &self.col_roots
    }

    /// Row roots followed by column roots — the wide-header list.
    pub fn line_roots(&self) -> Vec<NamespacedDigest> {
        let mut v = self.row_roots.clone();
        v.extend_from_slice(&self.col_roots);
        v
    }

    pub fn committed_root(&self, axis: Axis, index: usize) -> NamespacedDigest {
        match axis {
            Axis::Row => self.row_roots[index],
            Axis::Col => self.col_roots[index],
        }
    }

    /// The shares of one line, in position order.
    pub fn line(&self, axis: Axis, index: usize) -> Vec<&Share> {
        (0..self.side())
            .map(|pos| match axis {
                Axis::Row => self.cell(index, pos),
                Axis::Col => self.cell(pos, index),
            })
            .collect()
    }

    /// Rebuilds the namespaced tree of one line (for sample paths and fraud
    /// proofs).
    pub fn line_tree(&self, axis: Axis, index: usize) -> NamespaceTree {
        let bytes: Vec<Vec<u8>> = self
            .line(axis, index)
            .into_iter()
            .map(|s| s.bytes.clone())
            .collect();
        build_line_tree(self.k, axis, index, &bytes).expect("committed square lines are ordered")
    }

    /// Original-quadrant shares in row-major order (padding included).
    pub fn original_shares(&self) -> Vec<Share> {
        let mut out = Vec::with_capacity(self.k * self.k);
        for r in 0..self.k {
            for c in 0..self.k {
                out.push(self.cell(r, c).clone());
            }
        }
        out
    }

    /// The square as a fully known grid.
    pub fn to_grid(&self) -> CellGrid {
        CellGrid {
            k: self.k,
            cells: self.cells.iter().map(|s| Some(s.bytes.clone())).collect(),
        }
    }

    /// Grid with the listed `(row, col)` cells withheld.
    pub fn withhold(&self, withheld: &[(usize, usize)]) -> CellGrid {
        let mut grid = self.to_grid();
        for &(r, c) in withheld {
            grid.cells[r * self.side() + c] = None;
        }
        grid
    }

    /// Wraps a fully known set of published cells without asserting the
    /// coding is honest: roots are computed over the cells as-is. This is
    /// how a node that downloaded a whole (possibly miscoded) square
    /// materializes it for fraud-proof generation.
    pub fn from_published(
        k: usize,
        cells: Vec<Vec<u8>>,
        payload_size: usize,
    ) -> Result<Self, CodingError> {
        let side = 2 * k;
        if cells.len() != side * side {
            return Err(CodingError::Invalid("published cells disagree with the geometry"));
        }
        let share_size = NAMESPACE_SIZE + payload_size;
        if cells.iter().any(|c| c.len() != share_size) {
            return Err(CodingError::Invalid("published cells have inconsistent size"));
        }
        let shares: Vec<Share> = cells
            .into_iter()
            .enumerate()
            .map(|(i, bytes)| {
                let (r, c) = (i / side, i % side);
                Share { label: cell_label(k, r, c, &bytes), bytes }
            })
            .collect();
        let (row_roots, col_roots) = compute_roots(k, &shares)?;
        Ok(Self { k, payload_size, cells: shares, row_roots, col_roots })
    }

    /// Replaces one cell's bytes and recommits every root — the dishonest
    /// producer used in coding-fraud scenarios and tests.
    pub fn tamper(&self, row: usize, col: usize, mutate: impl FnOnce(&mut Vec<u8>)) -> Self {
        let side = self.side();
        let mut cells = self.cells.clone();
        let cell = &mut cells[row * side + col];
        mutate(&mut cell.bytes);
        cell.label = cell_label(self.k, row, col, &cell.bytes);
        let (row_roots, col_roots) =
            compute_roots(self.k, &cells).expect("tampered cells keep their labels ordered");
        Self {
            k: self.k,
            payload_size: self.payload_size,
            cells,
            row_roots,
            col_roots,
        }
    }
}

fn compute_roots(
    k: usize,
    cells: &[Share],
) -> Result<(Vec<NamespacedDigest>, Vec<NamespacedDigest>), CodingError> {
    let side = 2 * k;
    let row_roots = (0..side)
        .into_par_iter()
        .map(|r| {
            let bytes: Vec<Vec<u8>> =
                (0..side).map(|c| cells[r * side + c].bytes.clone()).collect();
            Ok(build_line_tree(k, Axis::Row, r, &bytes)?.root())
        })
        .collect::<Result<Vec<_>, CodingError>>()?;
    let col_roots = (0..side)
        .into_par_iter()
        .map(|c| {
            let bytes: Vec<Vec<u8>> =
                (0..side).map(|r| cells[r * side + c].bytes.clone()).collect();
            Ok(build_line_tree(k, Axis::Col, c, &bytes)?.root())
        })
        .collect::<Result<Vec<_>, CodingError>>()?;
    Ok((row_roots, col_roots))
}

/// Why a partial square could not be completed into a committed one.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReconstructError {
    /// Iterative decoding stalled with holes left: too much was withheld.
    #[error("square is unrecoverable: {missing} cells still unknown at fixpoint")]
    Unrecoverable { missing: usize },
    /// A completed line does not match its commitment — either its root
    /// differs outright or the line is not a codeword. Fraud-proof material.
    #[error("line {index} on the {axis:?} axis contradicts its commitment")]
    RootMismatch { axis: Axis, index: usize },
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// Completes a partial square by repeatedly decoding any row or column with
/// at least `k` known cells, then re-hashes every line against the trusted
/// commitments and re-encodes it to confirm it is a codeword.
pub fn reconstruct(
    grid: &CellGrid,
    row_roots: &[NamespacedDigest],
    col_roots: &[NamespacedDigest],
    payload_size: usize,
) -> Result<ExtendedDataSquare, ReconstructError> {
    let k = grid.k;
    let side = 2 * k;
    if grid.cells.len() != side * side || row_roots.len() != side || col_roots.len() != side {
        return Err(CodingError::Invalid("grid and commitments disagree on geometry").into());
    }
    let codec = LineCodec::new(k)?;
    let mut cells = grid.cells.clone();

    let mut progress = true;
    while progress {
        progress = false;
        for r in 0..side {
            let line: Vec<Option<Vec<u8>>> =
                (0..side).map(|c| cells[r * side + c].clone()).collect();
            let known = line.iter().filter(|c| c.is_some()).count();
            if known >= k && known < side {
                let full = codec.decode(&line)?;
                for (c, bytes) in full.into_iter().enumerate() {
                    cells[r * side + c] = Some(bytes);
                }
                progress = true;
            }
        }
        for c in 0..side {
            let line: Vec<Option<Vec<u8>>> =
                (0..side).map(|r| cells[r * side + c].clone()).collect();
            let known = line.iter().filter(|x| x.is_some()).count();
            if known >= k && known < side {
                let full = codec.decode(&line)?;
                for (r, bytes) in full.into_iter().enumerate() {
                    cells[r * side + c] = Some(bytes);
                }
                progress = true;
            }
        }
    }

    let missing = cells.iter().filter(|c| c.is_none()).count();
    if missing > 0 {
        return Err(ReconstructError::Unrecoverable { missing });
    }
    let cells: Vec<Vec<u8>> = cells.into_iter().map(Option::unwrap).collect();

    // every line must hash to its commitment and be a real codeword
    for axis in [Axis::Row, Axis::Col] {
        for index in 0..side {
            let line: Vec<Vec<u8>> = (0..side)
                .map(|pos| match axis {
                    Axis::Row => cells[index * side + pos].clone(),
                    Axis::Col => cells[pos * side + index].clone(),
                })
                .collect();
            let committed = match axis {
                Axis::Row => row_roots[index],
                Axis::Col => col_roots[index],
            };
            let matches = match build_line_tree(k, axis, index, &line) {
                Ok(tree) => tree.root() == committed,
                Err(_) => false,
            };
            if !matches {
                return Err(ReconstructError::RootMismatch { axis, index });
            }
            let reencoded = codec.reencode(&line[..k])?;
            if reencoded != line {
                return Err(ReconstructError::RootMismatch { axis, index });
            }
        }
    }

    let shares: Vec<Share> = cells
        .into_iter()
        .enumerate()
        .map(|(i, bytes)| {
            let (r, c) = (i / side, i % side);
            Share {
                label: cell_label(k, r, c, &bytes),
                bytes,
            }
        })
        .collect();
    let (rr, cr) = compute_roots(k, &shares)?;
    debug_assert_eq!(rr, row_roots);
    debug_assert_eq!(cr, col_roots);
    Ok(ExtendedDataSquare {
        k,
        payload_size,
        cells: shares,
        row_roots: rr,
        col_roots: cr,
    })
}
