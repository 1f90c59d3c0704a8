use serde::{Deserialize, Serialize};

use crate::error::RenderError;

/// Row-major image of `T`, indexed by pixel column `u` and row `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, RenderError> {
        if data.len() != width * height {
            return Err(RenderError::SizeMismatch {
                expected: (width, height),
                got: (data.len(), 1),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index(u, v);
        self.data[i] = value;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Raster<f64> {
    /// Bilinear sample at continuous pixel coordinates; `None` outside the
    /// image or when any tap is non-finite.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let (u0, v0) = (x.floor() as usize, y.floor() as usize);
        let (u1, v1) = ((u0 + 1).min(self.width - 1), (v0 + 1).min(self.height - 1));
        let (fx, fy) = (x - u0 as f64, y - v0 as f64);
        let taps = [*self.get(u0, v0), *self.get(u1, v0), *self.get(u0, v1), *self.get(u1, v1)];
        if taps.iter().any(|t| !t.is_finite()) {
            return None;
        }
        let top = taps[0] * (1.0 - fx) + taps[1] * fx;
        let bottom = taps[2] * (1.0 - fx) + taps[3] * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_planes() {
        let mut r = Raster::filled(4, 3, 0.0);
        for v in 0..3 {
            for u in 0..4 {
                r.set(u, v, 2.0 * u as f64 - v as f64 + 1.0);
            }
        }
        assert!((r.bilinear(1.25, 0.5).unwrap() - (2.5 - 0.5 + 1.0)).abs() < 1e-12);
        assert_eq!(r.bilinear(3.0, 2.0), Some(5.0));
        assert_eq!(r.bilinear(3.01, 0.0), None);
        r.set(2, 1, f64::INFINITY);
        assert_eq!(r.bilinear(1.5, 0.5), None);
    }

    #[test]
    fn size_is_checked() {
        assert!(Raster::from_vec(2, 2, vec![0u8; 3]).is_err());
    }
}
