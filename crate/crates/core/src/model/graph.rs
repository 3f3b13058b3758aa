use rayon::prelude::*;

use super::{ModelError, ModelParams};
use crate::data::InteractionStore;
use crate::matrix::Matrix;
use crate::scalar::{axpy, Scalar};

/// CSR over the `num_users + num_items` nodes of the user–item graph. Node
/// `u` is user `u`; node `num_users + i` is item `i`. Each training pair is
/// stored in both directions with coefficient `1 / sqrt(d_u * d_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBipartiteGraph<T> {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    coeffs: Vec<T>,
}

pub fn normalize_adjacency<T: Scalar>(train: &InteractionStore) -> NormalizedBipartiteGraph<T> {
    let nu = train.num_users();
    let ni = train.num_items();
    let item_deg = train.item_degrees();
    let coeff = |u: usize, i: usize| -> T {
        T::of(1.0 / ((train.user_degree(u) as f64) * (item_deg[i] as f64)).sqrt())
    };

    let mut offsets = Vec::with_capacity(nu + ni + 1);
    offsets.push(0);
    let nnz = 2 * train.num_interactions();
    let mut neighbors = vec![0u32; nnz];
    let mut coeffs = vec![T::zero(); nnz];

    // user rows: items in ascending order
    let mut pos = 0;
    for u in 0..nu {
        for &i in train.row(u) {
            neighbors[pos] = (nu + i as usize) as u32;
            coeffs[pos] = coeff(u, i as usize);
            pos += 1;
        }
        offsets.push(pos);
    }
    // item rows: users in ascending order, by counting sort on item degree
    let mut cursor = Vec::with_capacity(ni);
    for &d in &item_deg {
        cursor.push(pos);
        pos += d;
        offsets.push(pos);
    }
    for u in 0..nu {
        for &i in train.row(u) {
            let slot = &mut cursor[i as usize];
            neighbors[*slot] = u as u32;
            coeffs[*slot] = coeff(u, i as usize);
            *slot += 1;
        }
    }

    NormalizedBipartiteGraph {
        num_users: nu,
        num_items: ni,
        offsets,
        neighbors,
        coeffs,
    }
}

impl<T: Scalar> NormalizedBipartiteGraph<T> {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn user_node(&self, user: usize) -> usize {
        user
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.num_users + item
    }

    /// Neighbour node ids and coefficients of `node`.
    pub fn row(&self, node: usize) -> (&[u32], &[T]) {
        let r = self.offsets[node]..self.offsets[node + 1];
        (&self.neighbors[r.clone()], &self.coeffs[r])
    }

    pub fn coefficient(&self, from: usize, to: usize) -> Option<T> {
        let (nbrs, cs) = self.row(from);
        nbrs.binary_search(&(to as u32)).ok().map(|k| cs[k])
    }

    /// `out = Â · input` for a row-major `num_nodes × dim` buffer.
    pub fn multiply(&self, input: &[T], out: &mut [T], dim: usize) {
        debug_assert_eq!(input.len(), self.num_nodes() * dim);
        debug_assert_eq!(out.len(), self.num_nodes() * dim);
        if dim == 0 {
            return;
        }
        out.par_chunks_mut(dim).enumerate().for_each(|(node, row)| {
            row.iter_mut().for_each(|v| *v = T::zero());
            let (nbrs, cs) = self.row(node);
            for (&n, &c) in nbrs.iter().zip(cs) {
                let n = n as usize;
                axpy(c, &input[n * dim..(n + 1) * dim], row);
            }
        });
    }
}

/// `(1 / (layers + 1)) · Σ_{k=0..layers} Â^k · E` over a stacked
/// `num_nodes × dim` buffer. The map is self-adjoint, so it also serves as the
/// backward pass of itself.
pub fn propagate_stacked<T: Scalar>(
    graph: &NormalizedBipartiteGraph<T>,
    stacked: &[T],
    dim: usize,
    layers: usize,
) -> Vec<T> {
    if layers == 0 {
        return stacked.to_vec();
    }
    let mut acc = stacked.to_vec();
    let mut cur = stacked.to_vec();
    let mut next = vec![T::zero(); stacked.len()];
    for _ in 0..layers {
        graph.multiply(&cur, &mut next, dim);
        for (a, &n) in acc.iter_mut().zip(&next) {
            *a += n;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let inv = T::one() / T::of((layers + 1) as f64);
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

/// Final LightGCN embeddings: the uniform mean of layer-0..`layers`
/// propagations. `layers = 0` returns the input unchanged.
pub fn propagate_lightgcn<T: Scalar>(
    graph: &NormalizedBipartiteGraph<T>,
    params: &ModelParams<T>,
    layers: usize,
) -> Result<ModelParams<T>, ModelError> {
    if graph.num_users() != params.num_users() || graph.num_items() != params.num_items() {
        return Err(ModelError::Dimension(format!(
            "graph has {}x{} nodes, params {}x{}",
            graph.num_users(),
            graph.num_items(),
            params.num_users(),
            params.num_items()
        )));
    }
    if layers == 0 {
        return Ok(params.clone());
    }
    let dim = params.dim();
    let (users, items) = (params.num_users(), params.num_items());
    let mut stacked = Vec::with_capacity((users + items) * dim);
    stacked.extend_from_slice(params.user_emb.as_slice());
    stacked.extend_from_slice(params.item_emb.as_slice());
    let out = propagate_stacked(graph, &stacked, dim, layers);
    let (u, i) = out.split_at(users * dim);
    Ok(ModelParams {
        user_emb: Matrix::from_vec(users, dim, u.to_vec()).unwrap(),
        item_emb: Matrix::from_vec(items, dim, i.to_vec()).unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_adjacency_list;

    #[test]
    fn fixture_coefficients() {
        // u0–i0, u0–i1, u1–i1
        let train = parse_adjacency_list("0 0 1\n1 1".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        let half_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((g.coefficient(0, g.item_node(0)).unwrap() - half_sqrt2).abs() < 1e-15);
        assert!((g.coefficient(0, g.item_node(1)).unwrap() - 0.5).abs() < 1e-15);
        assert!((g.coefficient(1, g.item_node(1)).unwrap() - half_sqrt2).abs() < 1e-15);
        assert_eq!(g.coefficient(1, g.item_node(0)), None);
        for node in 0..g.num_nodes() {
            let (nbrs, cs) = g.row(node);
            for (&n, &c) in nbrs.iter().zip(cs) {
                assert_eq!(g.coefficient(n as usize, node), Some(c));
            }
        }
    }

    #[test]
    fn single_edge_has_unit_coefficient() {
        let train = parse_adjacency_list("0 0".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        assert_eq!(g.coefficient(0, 1), Some(1.0));
    }

    #[test]
    fn isolated_user_has_empty_row() {
        let train = parse_adjacency_list("0 0\n2 0".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        assert_eq!(g.row(1).0.len(), 0);
        assert!(g.coeffs.iter().all(|c| c.is_finite() && *c > 0.0));
    }

    #[test]
    fn zero_layers_is_identity() {
        let train = parse_adjacency_list("0 0 1\n1 1".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        let p = crate::model::init_params::<f64>(2, 2, 4, 3).unwrap();
        assert_eq!(propagate_lightgcn(&g, &p, 0).unwrap(), p);
    }

    #[test]
    fn size_mismatch_rejected() {
        let train = parse_adjacency_list("0 0 1\n1 1".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        let p = crate::model::init_params::<f64>(3, 2, 4, 3).unwrap();
        assert!(matches!(propagate_lightgcn(&g, &p, 1), Err(ModelError::Dimension(_))));
    }

    #[test]
    fn regular_graph_preserves_constant_rows() {
        // complete bipartite 3x3: every node has degree 3, so Â is row-stochastic
        let train = parse_adjacency_list("0 0 1 2\n1 0 1 2\n2 0 1 2".as_bytes(), None).unwrap();
        let g = normalize_adjacency::<f64>(&train);
        let stacked = vec![0.7; 6 * 2];
        let mut out = vec![0.0; 12];
        g.multiply(&stacked, &mut out, 2);
        for v in out {
            assert!((v - 0.7).abs() < 1e-15);
        }
    }
}
