use super::Tensor;
use crate::error::{Error, Result};

/// `y = x W + b` for `x: [n x d]`, `W: [d x k]`, `b: [k]`.
pub fn fc_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, d) = (x.rows(), x.cols());
    let (wd, k) = (w.rows(), w.cols());
    if d != wd || b.len() != k {
        return Err(Error::shape(
            "fc_forward",
            format!(
                "x {:?}, W {:?}, b {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        ));
    }
    let mut y = vec![0.0; n * k];
    let wdat = w.data();
    for r in 0..n {
        let out = &mut y[r * k..(r + 1) * k];
        out.copy_from_slice(b.data());
        for (j, &xv) in x.row(r).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wdat[j * k..(j + 1) * k];
            for (o, &wv) in out.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    let y = Tensor::matrix(n, k, y)?;
    y.ensure_finite("fc_forward output")?;
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

/// Gradients of `y = x W + b` given `dy: [n x k]`.
pub fn fc_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<FcGrads> {
    let (n, d) = (x.rows(), x.cols());
    let k = w.cols();
    if dy.rows() != n || dy.cols() != k || w.rows() != d {
        return Err(Error::shape(
            "fc_backward",
            format!("x {:?}, W {:?}, dy {:?}", x.shape(), w.shape(), dy.shape()),
        ));
    }
    let wdat = w.data();
    let mut dx = vec![0.0; n * d];
    let mut dw = vec![0.0; d * k];
    let mut db = vec![0.0; k];
    for r in 0..n {
        let g = dy.row(r);
        let xr = x.row(r);
        for (dbv, &gv) in db.iter_mut().zip(g) {
            *dbv += gv;
        }
        for j in 0..d {
            let wrow = &wdat[j * k..(j + 1) * k];
            dx[r * d + j] = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
            let xv = xr[j];
            if xv != 0.0 {
                for (dwv, &gv) in dw[j * k..(j + 1) * k].iter_mut().zip(g) {
                    *dwv += xv * gv;
                }
            }
        }
    }
    Ok(FcGrads {
        dx: Tensor::matrix(n, d, dx)?,
        dw: Tensor::from_vec(w.shape().to_vec(), dw)?,
        db: Tensor::from_vec(vec![k], db)?,
    })
}

/// Gathers rows of `table` for each id.
pub fn embedding_lookup(ids: &[usize], table: &Tensor) -> Result<Tensor> {
    let (v, d) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= v {
            return Err(Error::IndexOutOfRange {
                what: "embedding table",
                index: id,
                size: v,
            });
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::matrix(ids.len(), d, out)
}

/// Scatters `dy` rows back into `grad_table`, accumulating repeated ids.
pub fn embedding_backward(ids: &[usize], dy: &Tensor, grad_table: &mut Tensor) -> Result<()> {
    if dy.rows() != ids.len() || dy.cols() != grad_table.cols() {
        return Err(Error::shape(
            "embedding_backward",
            format!("{} ids, dy {:?}, table {:?}", ids.len(), dy.shape(), grad_table.shape()),
        ));
    }
    for (r, &id) in ids.iter().enumerate() {
        if id >= grad_table.rows() {
            return Err(Error::IndexOutOfRange {
                what: "embedding table",
                index: id,
                size: grad_table.rows(),
            });
        }
        let src = dy.row(r).to_vec();
        for (g, s) in grad_table.row_mut(id).iter_mut().zip(src) {
            *g += s;
        }
    }
    Ok(())
}

/// Mean over rows: `[n x d] -> [1 x d]`.
pub fn mean_pool(x: &Tensor) -> Result<Tensor> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::shape("mean_pool", "cannot pool zero rows"));
    }
    let mut out = vec![0.0; d];
    for r in 0..n {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let inv = 1.0 / n as f64;
    for o in &mut out {
        *o *= inv;
    }
    Tensor::matrix(1, d, out)
}

/// Broadcasts `dy: [d]` back over `n` rows, each scaled by `1/n`.
pub fn mean_pool_backward(dy: &Tensor, n: usize) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::shape("mean_pool_backward", "cannot pool zero rows"));
    }
    let d = dy.cols();
    let inv = 1.0 / n as f64;
    let row: Vec<f64> = dy.data().iter().map(|v| v * inv).collect();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        out.extend_from_slice(&row);
    }
    Tensor::matrix(n, d, out)
}

/// Column-wise concatenation of matrices with equal row counts. Zero-width
/// parts are allowed.
pub fn hconcat(parts: &[&Tensor]) -> Result<Tensor> {
    let n = parts.first().map_or(0, |p| p.rows());
    if parts.iter().any(|p| p.rows() != n) {
        let shapes: Vec<_> = parts.iter().map(|p| p.shape().to_vec()).collect();
        return Err(Error::shape("hconcat", format!("row counts differ: {shapes:?}")));
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Vec::with_capacity(n * total);
    for r in 0..n {
        for p in parts {
            if p.cols() > 0 {
                out.extend_from_slice(p.row(r));
            }
        }
    }
    Tensor::matrix(n, total, out)
}

/// Inverse of [`hconcat`]: splits columns into pieces of the given widths.
pub fn hsplit(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let total: usize = widths.iter().sum();
    if total != x.cols() {
        return Err(Error::shape(
            "hsplit",
            format!("widths {widths:?} do not sum to {} columns", x.cols()),
        ));
    }
    let n = x.rows();
    let mut outs: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
    for r in 0..n {
        let row = x.row(r);
        let mut off = 0;
        for (o, &w) in outs.iter_mut().zip(widths) {
            o.extend_from_slice(&row[off..off + w]);
            off += w;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(data, &w)| Tensor::matrix(n, w, data))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fc_is_passthrough() {
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = fc_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn fc_hand_example() {
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]);
        assert_eq!(fc_forward(&x, &w, &b).unwrap().data(), &[3.5]);
    }

    #[test]
    fn fc_shape_mismatch_errors() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[2, 2]);
        assert!(fc_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
        let w = Tensor::zeros(&[3, 2]);
        assert!(fc_forward(&x, &w, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn mean_pool_edge_cases() {
        let one = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mean_pool(&one).unwrap().data(), one.data());
        let pair = Tensor::matrix(2, 2, vec![1.5, -2.0, -1.5, 2.0]).unwrap();
        assert_eq!(mean_pool(&pair).unwrap().data(), &[0.0, 0.0]);
        assert!(mean_pool(&Tensor::zeros(&[0, 2])).is_err());
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let table = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            embedding_lookup(&[1, 4], &table),
            Err(Error::IndexOutOfRange { index: 4, .. })
        ));
    }

    #[test]
    fn repeated_ids_accumulate() {
        let dy = Tensor::matrix(3, 2, vec![1.0, 2.0, 10.0, 20.0, 5.0, 5.0]).unwrap();
        let mut g = Tensor::zeros(&[3, 2]);
        embedding_backward(&[2, 0, 2], &dy, &mut g).unwrap();
        assert_eq!(g.row(2), &[6.0, 7.0]);
        assert_eq!(g.row(0), &[10.0, 20.0]);
        assert_eq!(g.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor::zeros(&[2, 0]);
        let c = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let joined = hconcat(&[&a, &b, &c]).unwrap();
        assert_eq!(joined.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let parts = hsplit(&joined, &[1, 0, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[2], c);
        assert_eq!(parts[1].shape(), &[2, 0]);
    }
}
