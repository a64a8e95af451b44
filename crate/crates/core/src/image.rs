//! Read-only pixel access over source images.
//!
//! Regions always index the original pixels; nothing here resamples.

use std::path::Path;

pub use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::grid::Bbox;

/// Fill value for padding, discarded tiles, and empty canvas slots.
pub const CANONICAL_GRAY: [u8; 3] = [128, 128, 128];

/// An 8-bit RGB image of at least 1x1 pixels.
///
/// Implementors must return a pixel for every in-bounds coordinate.
pub trait ImageRef: Sync {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn pixel(&self, x: u32, y: u32) -> [u8; 3];

    /// Copies `bbox` out into an owned buffer. `bbox` must lie inside the image.
    fn crop(&self, bbox: Bbox) -> RgbImage {
        let mut out = RgbImage::new(bbox.width(), bbox.height());
        for (dx, dy, px) in out.enumerate_pixels_mut() {
            *px = Rgb(self.pixel(bbox.x0 + dx, bbox.y0 + dy));
        }
        out
    }
}

impl ImageRef for RgbImage {
    fn width(&self) -> u32 {
        self.dimensions().0
    }

    fn height(&self) -> u32 {
        self.dimensions().1
    }

    fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.get_pixel(x, y).0
    }

    fn crop(&self, bbox: Bbox) -> RgbImage {
        image::imageops::crop_imm(self, bbox.x0, bbox.y0, bbox.width(), bbox.height()).to_image()
    }
}

/// A solid canvas filled with [`CANONICAL_GRAY`].
pub fn gray_image(width: u32, height: u32) -> RgbImage {
    RgbImage::from_pixel(width, height, Rgb(CANONICAL_GRAY))
}

/// Decodes a PNG or JPEG file into RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let img = reader.with_guessed_format().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?.decode()?;
    let rgb = img.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(Error::ImageTooSmall {
            width: rgb.width(),
            height: rgb.height(),
        });
    }
    Ok(rgb)
}

/// Materializes any [`ImageRef`] into an owned buffer.
pub fn materialize(image: &dyn ImageRef) -> RgbImage {
    image.crop(Bbox::new(0, 0, image.width(), image.height()))
}

/// Encodes an image as PNG bytes.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}
