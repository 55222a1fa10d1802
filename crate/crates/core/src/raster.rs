//! Owned RGBA8 images and the three pixel primitives every editing tool is
//! built from: opaque fill, source-over overlay and rectangle outline.
//!
//! All operations are pure. They take `&Raster` and hand back a fresh buffer.

use std::fmt;
use std::io::Cursor;

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("failed to decode PNG: {0}")]
    Decode(String),
    #[error("region {0} has no pixels inside a {1}x{2} image")]
    EmptyRegion(Region, u32, u32),
    #[error("invalid raster dimensions {width}x{height} for {len} bytes")]
    Dimensions { width: u32, height: u32, len: usize },
    #[error("outline thickness must be at least 1")]
    Thickness,
    #[error("I/O error: {0}")]
    Io(String),
}

/// A SHA-256 content digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl Color {
    pub const WHITE: Color = Color::rgb(255, 255, 255);
    pub const BLACK: Color = Color::rgb(0, 0, 0);
    pub const RED: Color = Color::rgb(255, 0, 0);

    pub const fn rgba(r: u8, g: u8, b: u8, a: u8) -> Self {
        Color { r, g, b, a }
    }

    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Color { r, g, b, a: 255 }
    }

    pub fn to_array(self) -> [u8; 4] {
        [self.r, self.g, self.b, self.a]
    }
}

/// Integer pixel rectangle with inclusive edges.
///
/// Construction never clamps; corners may be reversed or lie outside any
/// particular image. Use [`Region::normalized`] and [`Region::clamp_to`] at
/// the point of use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

impl Region {
    pub const fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        Region { x1, y1, x2, y2 }
    }

    /// Swap reversed corners so that `x1 <= x2` and `y1 <= y2`.
    pub fn normalized(self) -> Self {
        Region {
            x1: self.x1.min(self.x2),
            y1: self.y1.min(self.y2),
            x2: self.x1.max(self.x2),
            y2: self.y1.max(self.y2),
        }
    }

    /// Normalize and intersect with `[0, width) x [0, height)`.
    pub fn clamp_to(self, width: u32, height: u32) -> Option<Region> {
        let r = self.normalized();
        let c = Region {
            x1: r.x1.max(0),
            y1: r.y1.max(0),
            x2: r.x2.min(width as i64 - 1),
            y2: r.y2.min(height as i64 - 1),
        };
        (c.x1 <= c.x2 && c.y1 <= c.y2).then_some(c)
    }

    /// Width of a normalized region in pixels.
    pub fn width(&self) -> i64 {
        let r = self.normalized();
        r.x2 - r.x1 + 1
    }

    pub fn height(&self) -> i64 {
        let r = self.normalized();
        r.y2 - r.y1 + 1
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        let r = self.normalized();
        x >= r.x1 && x <= r.x2 && y >= r.y1 && y <= r.y2
    }

    /// True when `other` lies entirely inside `self`.
    pub fn encloses(&self, other: &Region) -> bool {
        let o = other.normalized();
        self.contains(o.x1, o.y1) && self.contains(o.x2, o.y2)
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let a = self.normalized();
        let b = other.normalized();
        let r = Region {
            x1: a.x1.max(b.x1),
            y1: a.y1.max(b.y1),
            x2: a.x2.min(b.x2),
            y2: a.y2.min(b.y2),
        };
        (r.x1 <= r.x2 && r.y1 <= r.y2).then_some(r)
    }

    /// Smallest region covering both.
    pub fn union(&self, other: &Region) -> Region {
        let a = self.normalized();
        let b = other.normalized();
        Region {
            x1: a.x1.min(b.x1),
            y1: a.y1.min(b.y1),
            x2: a.x2.max(b.x2),
            y2: a.y2.max(b.y2),
        }
    }

    pub fn iou(&self, other: &Region) -> f64 {
        let inter = self.intersect(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Pixels of `self` not covered by `other`, as up to four disjoint
    /// rectangles.
    pub fn subtract(&self, other: &Region) -> Vec<Region> {
        let a = self.normalized();
        let Some(i) = a.intersect(other) else {
            return vec![a];
        };
        let mut out = Vec::with_capacity(4);
        if i.y1 > a.y1 {
            out.push(Region::new(a.x1, a.y1, a.x2, i.y1 - 1));
        }
        if i.y2 < a.y2 {
            out.push(Region::new(a.x1, i.y2 + 1, a.x2, a.y2));
        }
        if i.x1 > a.x1 {
            out.push(Region::new(a.x1, i.y1, i.x1 - 1, i.y2));
        }
        if i.x2 < a.x2 {
            out.push(Region::new(i.x2 + 1, i.y1, a.x2, i.y2));
        }
        out
    }
}

/// Owned RGBA8 image, row-major, four bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("digest", &self.digest())
            .finish()
    }
}

impl Raster {
    /// A `width x height` image filled with `color`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: u32, height: u32, color: Color) -> Self {
        assert!(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        let pixels = color
            .to_array()
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 4)
            .collect();
        Raster { width, height, pixels }
    }

    pub fn from_rgba(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize * 4 {
            return Err(RasterError::Dimensions { width, height, len: pixels.len() });
        }
        Ok(Raster { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    /// Region covering the whole image.
    pub fn bounds(&self) -> Region {
        Region::new(0, 0, self.width as i64 - 1, self.height as i64 - 1)
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2], self.pixels[o + 3]]
    }

    /// In-place pixel write. Only used while building new images.
    pub fn put_pixel(&mut self, x: u32, y: u32, px: [u8; 4]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 4].copy_from_slice(&px);
    }

    /// Paint a clamped rectangle in place with an opaque colour.
    pub(crate) fn paint_rect(&mut self, region: Region, c: Color) {
        let Some(r) = region.clamp_to(self.width, self.height) else {
            return;
        };
        let px = [c.r, c.g, c.b, 255];
        for y in r.y1..=r.y2 {
            let row = self.offset(r.x1 as u32, y as u32);
            let end = self.offset(r.x2 as u32, y as u32) + 4;
            for chunk in self.pixels[row..end].chunks_exact_mut(4) {
                chunk.copy_from_slice(&px);
            }
        }
    }

    /// Digest over dimensions and pixel bytes.
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.pixels);
        Digest(h.finalize().into())
    }

    fn clamp(&self, region: Region) -> Result<Region, RasterError> {
        region
            .clamp_to(self.width, self.height)
            .ok_or(RasterError::EmptyRegion(region, self.width, self.height))
    }

    /// Every pixel inside `region` becomes `(c.r, c.g, c.b, 255)`.
    pub fn fill_opaque(&self, region: Region, c: Color) -> Result<Raster, RasterError> {
        let r = self.clamp(region)?;
        let mut out = self.clone();
        out.paint_rect(r, c);
        Ok(out)
    }

    /// Source-over composite `c` onto every pixel inside `region`.
    ///
    /// Channels are blended in integer arithmetic with round-half-up, so an
    /// opaque base stays opaque: `out = round((src * a + dst * (255 - a)) / 255)`.
    pub fn composite_overlay(&self, region: Region, c: Color) -> Result<Raster, RasterError> {
        let r = self.clamp(region)?;
        let mut out = self.clone();
        out.blend_rect(r, c);
        Ok(out)
    }

    /// In-place source-over on a clamped rectangle.
    pub(crate) fn blend_rect(&mut self, region: Region, c: Color) {
        let Some(r) = region.clamp_to(self.width, self.height) else {
            return;
        };
        if c.a == 0 {
            return;
        }
        let src = [c.r, c.g, c.b];
        let sa = c.a as u32;
        for y in r.y1..=r.y2 {
            for x in r.x1..=r.x2 {
                let o = self.offset(x as u32, y as u32);
                blend_source_over(&mut self.pixels[o..o + 4], src, sa);
            }
        }
    }

    /// Opaque frame of `thickness` pixels grown inward from the clamped
    /// region boundary.
    pub fn draw_rect_outline(
        &self,
        region: Region,
        c: Color,
        thickness: u32,
    ) -> Result<Raster, RasterError> {
        if thickness == 0 {
            return Err(RasterError::Thickness);
        }
        let r = self.clamp(region)?;
        let t = thickness as i64;
        let mut out = self.clone();
        if 2 * t >= r.width() || 2 * t >= r.height() {
            out.paint_rect(r, c);
            return Ok(out);
        }
        // top, bottom, left, right bands
        out.paint_rect(Region::new(r.x1, r.y1, r.x2, r.y1 + t - 1), c);
        out.paint_rect(Region::new(r.x1, r.y2 - t + 1, r.x2, r.y2), c);
        out.paint_rect(Region::new(r.x1, r.y1 + t, r.x1 + t - 1, r.y2 - t), c);
        out.paint_rect(Region::new(r.x2 - t + 1, r.y1 + t, r.x2, r.y2 - t), c);
        Ok(out)
    }

    /// Crop to a clamped region.
    pub fn crop(&self, region: Region) -> Result<Raster, RasterError> {
        let r = self.clamp(region)?;
        let w = r.width() as u32;
        let mut pixels = Vec::with_capacity(r.area() as usize * 4);
        for y in r.y1..=r.y2 {
            let o = self.offset(r.x1 as u32, y as u32);
            pixels.extend_from_slice(&self.pixels[o..o + w as usize * 4]);
        }
        Raster::from_rgba(w, r.height() as u32, pixels)
    }
}

/// Porter-Duff source-over of a straight-alpha colour onto one RGBA pixel.
fn blend_source_over(px: &mut [u8], src: [u8; 3], sa: u32) {
    let da = px[3] as u32;
    // out alpha scaled by 255
    let oa = sa * 255 + da * (255 - sa);
    if oa == 0 {
        px.copy_from_slice(&[0, 0, 0, 0]);
        return;
    }
    for ch in 0..3 {
        let num = src[ch] as u32 * sa * 255 + px[ch] as u32 * da * (255 - sa);
        px[ch] = ((2 * num + oa) / (2 * oa)) as u8;
    }
    px[3] = ((2 * oa + 255) / 510) as u8;
}

/// Decode PNG bytes into RGBA8. Grey, palette and RGB inputs are promoted
/// with alpha 255.
pub fn load_png(bytes: &[u8]) -> Result<Raster, RasterError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    Raster::from_rgba(w, h, rgba.into_raw())
}

/// Encode as an 8-bit RGBA PNG.
pub fn save_png(r: &Raster) -> Vec<u8> {
    let img = RgbaImage::from_raw(r.width, r.height, r.pixels.clone())
        .expect("raster length invariant");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Scalar float reference of straight-alpha source-over.
    // Straight-alpha source-over evaluated on 255-scaled values, which are
    // exact in f64, then rounded half up.
    fn oracle_pixel(dst: [u8; 4], c: Color) -> [u8; 4] {
        let sa = c.a as f64;
        let da = dst[3] as f64;
        let oa = sa * 255.0 + da * (255.0 - sa);
        if oa == 0.0 {
            return [0, 0, 0, 0];
        }
        let src = [c.r, c.g, c.b];
        let mut out = [0u8; 4];
        for ch in 0..3 {
            let v = (src[ch] as f64 * sa * 255.0 + dst[ch] as f64 * da * (255.0 - sa)) / oa;
            out[ch] = (v + 0.5).floor() as u8;
        }
        out[3] = (oa / 255.0 + 0.5).floor() as u8;
        out
    }

    #[test]
    fn red_overlay_on_white() {
        let r = Raster::filled(1, 1, Color::WHITE);
        let out = r.composite_overlay(r.bounds(), Color::rgba(255, 0, 0, 50)).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 205, 205, 255]);
        assert_eq!(oracle_pixel([255, 255, 255, 255], Color::rgba(255, 0, 0, 50)), [255, 205, 205, 255]);
    }

    #[test]
    fn transparent_and_opaque_overlay() {
        let mut r = Raster::filled(3, 3, Color::rgb(10, 20, 30));
        r.put_pixel(1, 1, [200, 100, 50, 255]);
        let same = r.composite_overlay(r.bounds(), Color::rgba(9, 9, 9, 0)).unwrap();
        assert_eq!(same, r);
        let red = r.composite_overlay(r.bounds(), Color::rgba(255, 0, 0, 255)).unwrap();
        assert!((0..3).all(|y| (0..3).all(|x| red.pixel(x, y) == [255, 0, 0, 255])));
    }

    #[test]
    fn fill_single_pixel() {
        let r = Raster::filled(2, 2, Color::BLACK);
        let out = r.fill_opaque(Region::new(0, 0, 0, 0), Color::WHITE).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 255, 255, 255]);
        assert_eq!(out.pixel(1, 0), [0, 0, 0, 255]);
        assert_eq!(out.pixel(0, 1), [0, 0, 0, 255]);
        assert_eq!(out.pixel(1, 1), [0, 0, 0, 255]);
        // input untouched
        assert_eq!(r.pixel(0, 0), [0, 0, 0, 255]);
    }

    #[test]
    fn fill_full_image_turns_white() {
        let r = Raster::filled(4, 3, Color::rgba(1, 2, 3, 4));
        let out = r.fill_opaque(Region::new(-5, -5, 50, 50), Color::WHITE).unwrap();
        assert_eq!(out, Raster::filled(4, 3, Color::WHITE));
    }

    #[test]
    fn empty_region_is_rejected() {
        let r = Raster::filled(4, 4, Color::WHITE);
        assert!(matches!(
            r.fill_opaque(Region::new(10, 10, 20, 20), Color::RED),
            Err(RasterError::EmptyRegion(..))
        ));
        assert!(r.composite_overlay(Region::new(-3, 0, -1, 2), Color::RED).is_err());
        assert!(r.draw_rect_outline(Region::new(0, 9, 3, 12), Color::RED, 1).is_err());
    }

    #[test]
    fn outline_frame_pixel_count() {
        let r = Raster::filled(100, 100, Color::WHITE);
        let out = r.draw_rect_outline(Region::new(10, 10, 89, 89), Color::RED, 3).unwrap();
        let mut red = 0;
        for y in 0..100 {
            for x in 0..100 {
                let p = out.pixel(x, y);
                // scalar frame membership
                let inside = (10..=89).contains(&x) && (10..=89).contains(&y);
                let interior = (13..=86).contains(&x) && (13..=86).contains(&y);
                if inside && !interior {
                    assert_eq!(p, [255, 0, 0, 255]);
                    red += 1;
                } else {
                    assert_eq!(p, [255, 255, 255, 255]);
                }
            }
        }
        assert_eq!(red, 80 * 80 - 74 * 74);
        assert_eq!(out.pixel(50, 50), [255, 255, 255, 255]);
        let twice = out.draw_rect_outline(Region::new(10, 10, 89, 89), Color::RED, 3).unwrap();
        assert_eq!(twice, out);
    }

    #[test]
    fn thick_outline_degenerates_to_fill() {
        let r = Raster::filled(20, 20, Color::WHITE);
        let reg = Region::new(3, 4, 8, 15);
        let a = r.draw_rect_outline(reg, Color::RED, 6).unwrap();
        let b = r.fill_opaque(reg, Color::RED).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn png_round_trip_and_promotion() {
        let red = Raster::filled(1, 1, Color::RED);
        let bytes = save_png(&red);
        let back = load_png(&bytes).unwrap();
        assert_eq!(back.as_bytes(), &[255, 0, 0, 255]);

        let grey = image::GrayImage::from_pixel(2, 2, image::Luma([128u8]));
        let mut buf = Cursor::new(Vec::new());
        grey.write_to(&mut buf, ImageFormat::Png).unwrap();
        let decoded = load_png(buf.get_ref()).unwrap();
        assert_eq!(decoded.as_bytes(), [128, 128, 128, 255].repeat(4).as_slice());

        assert!(matches!(load_png(b"not a png"), Err(RasterError::Decode(_))));
    }

    #[test]
    fn region_helpers() {
        let r = Region::new(5, 8, 1, 2).normalized();
        assert_eq!(r, Region::new(1, 2, 5, 8));
        assert_eq!(r.area(), 5 * 7);
        assert_eq!(Region::new(-4, -4, 3, 3).clamp_to(2, 2), Some(Region::new(0, 0, 1, 1)));
        assert_eq!(Region::new(0, 0, 9, 9).iou(&Region::new(0, 0, 9, 9)), 1.0);
        let pieces = Region::new(0, 0, 9, 9).subtract(&Region::new(3, 3, 5, 5));
        assert_eq!(pieces.iter().map(|p| p.area()).sum::<i64>(), 100 - 9);
    }

    fn arb_raster() -> impl Strategy<Value = Raster> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h * 4) as usize)
                .prop_map(move |px| Raster::from_rgba(w, h, px).unwrap())
        })
    }

    fn arb_region() -> impl Strategy<Value = Region> {
        (-3i64..14, -3i64..14, -3i64..14, -3i64..14).prop_map(|(a, b, c, d)| Region::new(a, b, c, d))
    }

    fn arb_color() -> impl Strategy<Value = Color> {
        any::<[u8; 4]>().prop_map(|[r, g, b, a]| Color::rgba(r, g, b, a))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn composite_matches_scalar_oracle(r in arb_raster(), reg in arb_region(), c in arb_color()) {
            match r.composite_overlay(reg, c) {
                Err(RasterError::EmptyRegion(..)) => {
                    prop_assert!(reg.clamp_to(r.width(), r.height()).is_none());
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
                Ok(out) => {
                    let cl = reg.clamp_to(r.width(), r.height()).unwrap();
                    for y in 0..r.height() {
                        for x in 0..r.width() {
                            let expect = if cl.contains(x as i64, y as i64) {
                                if c.a == 0 { r.pixel(x, y) } else { oracle_pixel(r.pixel(x, y), c) }
                            } else {
                                r.pixel(x, y)
                            };
                            prop_assert_eq!(out.pixel(x, y), expect);
                        }
                    }
                }
            }
        }

        #[test]
        fn png_round_trip_is_lossless(r in arb_raster()) {
            prop_assert_eq!(load_png(&save_png(&r)).unwrap(), r);
        }

        #[test]
        fn subtract_partitions(a in arb_region(), b in arb_region()) {
            let pieces = a.subtract(&b);
            let an = a.normalized();
            for y in an.y1..=an.y2 {
                for x in an.x1..=an.x2 {
                    let n = pieces.iter().filter(|p| p.contains(x, y)).count();
                    prop_assert_eq!(n, usize::from(!b.contains(x, y)));
                }
            }
        }
    }
}
