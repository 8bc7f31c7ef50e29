//! Set-of-Mark screenshot annotation.

use font8x8::UnicodeFonts;
use image::{Rgb, RgbImage};

use super::NodeAugment;

/// Height in pixels of a bid label: 8 px glyphs plus one pixel of padding above and below.
pub const LABEL_HEIGHT: u32 = 10;
const OUTLINE: u32 = 2;

const PALETTE: &[[u8; 3]] = &[
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 140, 140],
    [240, 50, 230],
    [128, 0, 0],
];

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
pub type PixelRect = (u32, u32, u32, u32);

fn box_pixels(aug: &NodeAugment, width: u32, height: u32) -> Option<PixelRect> {
    let b = aug.bbox;
    let x0 = b.left.floor().max(0.0) as u32;
    let y0 = b.top.floor().max(0.0) as u32;
    let x1 = (b.right.ceil().max(0.0) as u32).min(width);
    let y1 = (b.bottom.ceil().max(0.0) as u32).min(height);
    (x0 < x1 && y0 < y1).then_some((x0, y0, x1, y1))
}

/// Where the bid label of a visible augment is drawn: just above the box's
/// top-left corner, or inside the box when there is no room above.
pub fn label_rect(aug: &NodeAugment, width: u32, height: u32) -> Option<PixelRect> {
    let (x0, y0, _, _) = box_pixels(aug, width, height)?;
    let w = 8 * aug.bid.as_str().chars().count() as u32 + 2;
    let top = if y0 >= LABEL_HEIGHT { y0 - LABEL_HEIGHT } else { y0 };
    let x1 = (x0 + w).min(width);
    let y1 = (top + LABEL_HEIGHT).min(height);
    (x0 < x1 && top < y1).then_some((x0, top, x1, y1))
}

fn color_for(aug: &NodeAugment) -> Rgb<u8> {
    let h = aug
        .bid
        .as_str()
        .bytes()
        .fold(0usize, |acc, b| acc.wrapping_mul(31).wrapping_add(b as usize));
    Rgb(PALETTE[h % PALETTE.len()])
}

/// Outline every visible element and label it with its bid.
pub fn som_overlay(image: &RgbImage, augments: &[NodeAugment]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    for aug in augments.iter().filter(|a| a.visible) {
        let Some((x0, y0, x1, y1)) = box_pixels(aug, w, h) else {
            continue;
        };
        let color = color_for(aug);
        for y in y0..y1 {
            for x in x0..x1 {
                let edge = x < x0 + OUTLINE || x + OUTLINE >= x1 || y < y0 + OUTLINE || y + OUTLINE >= y1;
                if edge {
                    out.put_pixel(x, y, color);
                }
            }
        }
        if let Some(rect) = label_rect(aug, w, h) {
            draw_label(&mut out, aug.bid.as_str(), rect, color);
        }
    }
    out
}

fn draw_label(img: &mut RgbImage, text: &str, rect: PixelRect, bg: Rgb<u8>) {
    let (x0, y0, x1, y1) = rect;
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x, y, bg);
        }
    }
    let fg = Rgb([255, 255, 255]);
    for (i, c) in text.chars().enumerate() {
        let Some(glyph) = font8x8::BASIC_FONTS.get(c) else {
            continue;
        };
        let gx = x0 + 1 + 8 * i as u32;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8u32 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                let (x, y) = (gx + col, y0 + 1 + row as u32);
                if x < x1 && y < y1 {
                    img.put_pixel(x, y, fg);
                }
            }
        }
    }
}
