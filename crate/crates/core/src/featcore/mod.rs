//! Dense feature maps, the `GDT3` tensor container and bilinear sampling.
//!
//! Level coordinates put integer values at pixel centers; a full-resolution
//! image pixel `u` maps to `u * r / stride` on a level of an image resized
//! by `r`.

mod sample;
pub mod tensor;

pub use sample::{
    bilinear_grad, bilinear_sample, sample_footprint, sample_multiview,
    sample_multiview_with_jacobian, BilinearGrad, FootprintEntry, MultiviewJacobian,
};

use crate::error::{Error, Result};

/// Default FPN strides: 1/8, 1/16, 1/32 and 1/64 of the input image.
pub const DEFAULT_STRIDES: [u32; 4] = [8, 16, 32, 64];

/// One dense `(C, H, W)` feature map stored as row-major `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLevel {
    channels: usize,
    height: usize,
    width: usize,
    stride: u32,
    data: Vec<f32>,
}

impl FeatureLevel {
    pub fn new(channels: usize, height: usize, width: usize, stride: u32, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "feature level shape must be positive, got ({channels}, {height}, {width})"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be positive".into()));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: data.len(),
                context: "feature level data",
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            stride,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, stride: u32) -> Result<Self> {
        Self::new(channels, height, width, stride, vec![0.0; channels * height * width])
    }

    /// Builds a level by evaluating `f(channel, row, col)` at every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        stride: u32,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, stride, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// Per-camera, per-level feature maps sharing one shape per level.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    cameras: Vec<Vec<FeatureLevel>>,
}

impl FeaturePyramid {
    pub fn new(cameras: Vec<Vec<FeatureLevel>>) -> Result<Self> {
        let first = cameras
            .first()
            .ok_or_else(|| Error::InvalidInput("pyramid needs at least one camera".into()))?;
        if first.is_empty() {
            return Err(Error::InvalidInput("pyramid needs at least one level".into()));
        }
        let channels = first[0].channels;
        for levels in &cameras {
            if levels.len() != first.len() {
                return Err(Error::Dimension {
                    expected: first.len(),
                    actual: levels.len(),
                    context: "pyramid level count",
                });
            }
            for (lvl, reference) in levels.iter().zip(first) {
                if lvl.shape() != reference.shape() || lvl.stride != reference.stride {
                    return Err(Error::InvalidInput(format!(
                        "pyramid level shape mismatch: {:?}/{} vs {:?}/{}",
                        lvl.shape(),
                        lvl.stride,
                        reference.shape(),
                        reference.stride
                    )));
                }
                if lvl.channels != channels {
                    return Err(Error::Dimension {
                        expected: channels,
                        actual: lvl.channels,
                        context: "pyramid channel count",
                    });
                }
            }
        }
        Ok(Self { cameras })
    }

    pub fn camera_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn level_count(&self) -> usize {
        self.cameras[0].len()
    }

    pub fn channels(&self) -> usize {
        self.cameras[0][0].channels
    }

    pub fn levels(&self, camera: usize) -> &[FeatureLevel] {
        &self.cameras[camera]
    }

    pub fn levels_mut(&mut self, camera: usize) -> &mut [FeatureLevel] {
        &mut self.cameras[camera]
    }

    pub fn cameras(&self) -> &[Vec<FeatureLevel>] {
        &self.cameras
    }

    pub fn into_cameras(self) -> Vec<Vec<FeatureLevel>> {
        self.cameras
    }
}

/// Multi-view sample of one 3D point: the σ-masked mean over cameras and levels.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub feature: Vec<f64>,
    pub visible_count: usize,
    pub valid: bool,
}
