use crate::error::{Error, Result};
use crate::raster::Image;
use crate::synthgen::Sample;

/// Pixel-wise average of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanImage {
    pub image: Image,
    pub n_source: usize,
}

pub fn pixel_average(train: &[Sample]) -> Result<MeanImage> {
    let first = train
        .first()
        .ok_or(Error::Empty("pixel_average needs at least one image"))?;
    let dims = first.image.dims();
    let mut sum = vec![0.0; first.image.as_slice().len()];
    for s in train {
        if s.image.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "sample {} is {:?}, expected {:?}",
                s.id,
                s.image.dims(),
                dims
            )));
        }
        for (acc, v) in sum.iter_mut().zip(s.image.as_slice()) {
            *acc += v;
        }
    }
    let n = train.len() as f64;
    for v in &mut sum {
        *v /= n;
    }
    Ok(MeanImage {
        image: Image::from_vec(dims.0, dims.1, sum)?,
        n_source: train.len(),
    })
}

/// Replace every background pixel with the mean image; lesion pixels are kept
/// as-is. Test data must be normalized with the mean of the training set.
pub fn normalize_background(sample: &Sample, mean: &MeanImage) -> Result<Sample> {
    if sample.image.dims() != mean.image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "sample {:?} vs mean image {:?}",
            sample.image.dims(),
            mean.image.dims()
        )));
    }
    let mut out = sample.clone();
    let (h, w) = sample.image.dims();
    for row in 0..h {
        for col in 0..w {
            if !sample.mask.get(row, col) {
                out.image.set(row, col, mean.image.get(row, col));
            }
        }
    }
    Ok(out)
}
