//! Cross-instance interaction: parameter-free attention over whole-person
//! feature maps plus a positional term.

use crate::dim_err;
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Row-stochastic instance attention together with its raw logits
/// (appearance Gram plus positional Gram), kept for dumping.
pub struct InstanceAttention<S: Scalar> {
    /// `[N,N]`, each row sums to 1.
    pub weights: Tensor<S>,
    /// `[N,N]` pre-softmax scores.
    pub logits: Tensor<S>,
}

fn validate<S: Scalar>(f_inst: &Tensor<S>, f_pos: &Tensor<S>) -> Result<usize> {
    if f_inst.shape().len() != 4 {
        return Err(dim_err!("instance features must be [N,d,h,w], got {:?}", f_inst.shape()));
    }
    if f_pos.shape().len() != 2 {
        return Err(dim_err!("positional embedding must be [N,p], got {:?}", f_pos.shape()));
    }
    let n = f_inst.shape()[0];
    if f_pos.shape()[0] != n {
        return Err(dim_err!(
            "positional rows {} do not match instance count {n}",
            f_pos.shape()[0]
        ));
    }
    Ok(n)
}

/// Attention over instances: row i holds the mixture weights instance i
/// applies to every instance j. Parameter-free; callers must skip N = 0.
pub fn cim_attention<S: Scalar>(f_inst: &Tensor<S>, f_pos: &Tensor<S>) -> Result<InstanceAttention<S>> {
    let n = validate(f_inst, f_pos)?;
    let flat = f_inst.reshape(&[n, f_inst.numel() / n])?;
    let appearance = flat.matmul(&flat.transpose2()?)?;
    let positional = f_pos.matmul(&f_pos.transpose2()?)?;
    let logits = appearance.add(&positional)?;
    let weights = logits.softmax_rows()?;
    Ok(InstanceAttention { weights, logits })
}

/// Attention-weighted mixture of flattened instance maps plus the residual:
/// `out_i = sum_j Att[i,j] F_j + F_i`.
pub fn cim_forward<S: Scalar>(
    f_inst: &Tensor<S>,
    f_pos: &Tensor<S>,
) -> Result<(Tensor<S>, InstanceAttention<S>)> {
    let n = validate(f_inst, f_pos)?;
    let att = cim_attention(f_inst, f_pos)?;
    let flat = f_inst.reshape(&[n, f_inst.numel() / n])?;
    let mixed = att.weights.matmul(&flat)?;
    let out = mixed.reshape(f_inst.shape())?.add(f_inst)?;
    Ok((out, att))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar softmax oracle, independent of the engine.
    fn softmax_oracle(row: &[f64]) -> Vec<f64> {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / sum).collect()
    }

    #[test]
    fn singleton_softmax_is_one() {
        let f = Tensor::<f64>::from_f64s(&[1, 2, 2, 2], &[0.3; 8]).unwrap();
        let pos = Tensor::<f64>::zeros(&[1, 4]);
        let att = cim_attention(&f, &pos).unwrap();
        assert_eq!(att.weights.data(), &[1.0]);
    }

    #[test]
    fn identical_instances_attend_uniformly() {
        let one = [0.7, -0.2, 0.4, 0.9];
        let mut data = Vec::new();
        for _ in 0..3 {
            data.extend_from_slice(&one);
        }
        let f = Tensor::<f64>::from_f64s(&[3, 1, 2, 2], &data).unwrap();
        let pos = Tensor::<f64>::from_f64s(&[3, 2], &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let att = cim_attention(&f, &pos).unwrap();
        for &v in att.weights.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_instance_scalar_case_matches_oracle() {
        // Features {2, 0} at d=h=w=1, zero positions: logits are the Gram
        // matrix [[4,0],[0,0]].
        let f = Tensor::<f64>::from_f64s(&[2, 1, 1, 1], &[2.0, 0.0]).unwrap();
        let pos = Tensor::<f64>::zeros(&[2, 2]);
        let att = cim_attention(&f, &pos).unwrap();
        assert_eq!(att.logits.data(), &[4.0, 0.0, 0.0, 0.0]);

        let row0 = softmax_oracle(&[4.0, 0.0]);
        let row1 = softmax_oracle(&[0.0, 0.0]);
        assert!((row0[0] - 0.9820).abs() < 1e-4);
        assert!((row0[1] - 0.0180).abs() < 1e-4);
        assert_eq!(row1, vec![0.5, 0.5]);
        for (got, want) in att.weights.data().iter().zip(row0.iter().chain(&row1)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_forward_doubles_features() {
        let f = Tensor::<f64>::from_f64s(&[1, 2, 1, 2], &[0.1, -0.5, 2.0, 7.25]).unwrap();
        let pos = Tensor::<f64>::from_f64s(&[1, 2], &[0.3, 0.9]).unwrap();
        let (out, _) = cim_forward(&f, &pos).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert_eq!(o.to_bits(), (2.0 * x).to_bits());
        }
    }

    #[test]
    fn identical_instances_forward_doubles_features() {
        let one = [0.25, -1.5];
        let data: Vec<f64> = one.iter().chain(&one).chain(&one).cloned().collect();
        let f = Tensor::<f64>::from_f64s(&[3, 2, 1, 1], &data).unwrap();
        let pos = Tensor::<f64>::from_f64s(&[3, 2], &[0.1, 0.2, 0.1, 0.2, 0.1, 0.2]).unwrap();
        let (out, _) = cim_forward(&f, &pos).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert!((o - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn two_instance_forward_matches_hand_composition() {
        let f = Tensor::<f64>::from_f64s(&[2, 1, 1, 1], &[2.0, 0.0]).unwrap();
        let pos = Tensor::<f64>::zeros(&[2, 2]);
        let (out, _) = cim_forward(&f, &pos).unwrap();
        let row0 = softmax_oracle(&[4.0, 0.0]);
        let expect0 = row0[0] * 2.0 + row0[1] * 0.0 + 2.0;
        assert!((expect0 - 3.9640).abs() < 1e-4);
        assert!((out.data()[0] - expect0).abs() < 1e-12);
        // Instance 1 mixes 0.5/0.5 over {2, 0} and adds its residual 0.
        assert!((out.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_instance_count_is_an_error() {
        let f = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![0.0]).unwrap();
        let pos = Tensor::<f64>::zeros(&[2, 2]);
        assert!(cim_attention(&f, &pos).is_err());
    }
}
