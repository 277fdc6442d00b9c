//! Nodal fields on the bulk mesh and on the boundary ring.

use serde::{Deserialize, Serialize};
use std::ops::{Deref, DerefMut};

macro_rules! nodal_field {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn constant(n: usize, value: f64) -> Self {
                Self(vec![value; n])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn max_abs(&self) -> f64 {
                self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }

            pub fn min_value(&self) -> f64 {
                self.0.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            /// `self - other`, nodewise.
            pub fn minus(&self, other: &Self) -> Self {
                Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
            }

            /// `self + s * other`, nodewise.
            pub fn plus_scaled(&self, s: f64, other: &Self) -> Self {
                Self(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
            }

            pub fn scaled(&self, s: f64) -> Self {
                Self(self.0.iter().map(|a| s * a).collect())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

nodal_field!(
    /// Values at every bulk node, boundary nodes included.
    BulkField
);
nodal_field!(
    /// Values at the boundary ring nodes, in ring order.
    BoundaryField
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodal_arithmetic() {
        let a = BulkField(vec![1.0, -2.0, 3.0]);
        let b = BulkField::constant(3, 0.5);
        assert_eq!(a.minus(&b).0, vec![0.5, -2.5, 2.5]);
        assert_eq!(a.plus_scaled(2.0, &b).0, vec![2.0, -1.0, 4.0]);
        assert_eq!(a.scaled(-1.0).0, vec![-1.0, 2.0, -3.0]);
        assert_eq!(a.max_abs(), 3.0);
        assert_eq!(a.min_value(), -2.0);
        assert!(a.is_finite());
        assert!(!BoundaryField(vec![f64::NAN]).is_finite());
        assert_eq!(BoundaryField::zeros(2).into_inner(), vec![0.0, 0.0]);
    }

    #[test]
    fn serializes_as_a_plain_array() {
        let a = BoundaryField(vec![1.0, 2.5]);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[1.0,2.5]");
    }
}
