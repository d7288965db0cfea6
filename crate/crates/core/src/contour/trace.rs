//! Moore-neighbor boundary tracing with Jacob's stopping criterion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ContourChain, InstanceMask};
use crate::geometry::Point2;

/// Neighbor offsets in screen-clockwise order (x right, y down), starting east.
const DIRS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const WEST: usize = 4;

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset between 8-neighbors")
}

/// An instance that produced fewer than three boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedInstance {
    pub instance_id: u32,
    pub boundary_pixels: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ContourSet {
    pub chains: BTreeMap<u32, ContourChain>,
    pub skipped: Vec<SkippedInstance>,
}

/// Traces the outer boundary of every instance in `mask`.
///
/// The trace starts at the first pixel of the instance in raster order and
/// walks screen-clockwise, which gives a positive shoelace sum in pixel
/// coordinates. Pixels outside the image count as background, so instances
/// touching the border are closed along it. Only the component containing the
/// first raster pixel is traced and holes are ignored.
pub fn extract_contours(mask: &InstanceMask) -> ContourSet {
    let mut starts: BTreeMap<u32, (i64, i64)> = BTreeMap::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let id = mask.get(x, y);
            if id != 0 {
                starts.entry(id).or_insert((x as i64, y as i64));
            }
        }
    }
    let mut set = ContourSet::default();
    for (id, start) in starts {
        let pixels = trace_from(mask, id, start);
        if pixels.len() < 3 {
            set.skipped.push(SkippedInstance { instance_id: id, boundary_pixels: pixels.len() });
            continue;
        }
        let points = pixels.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
        let chain = ContourChain::new(points).expect("at least three boundary pixels");
        set.chains.insert(id, chain);
    }
    set
}

fn trace_from(mask: &InstanceMask, id: u32, start: (i64, i64)) -> Vec<(i64, i64)> {
    let inside = |p: (i64, i64)| {
        p.0 >= 0
            && p.1 >= 0
            && (p.0 as usize) < mask.width()
            && (p.1 as usize) < mask.height()
            && mask.get(p.0 as usize, p.1 as usize) == id
    };
    let mut chain = vec![start];
    let mut cur = start;
    let mut back = WEST;
    let mut first_step = None;
    // every boundary pixel can be entered from at most 8 directions
    let limit = 8 * mask.width() * mask.height() + 8;
    for _ in 0..limit {
        let step = (1..=8).map(|k| (back + k) % 8).find(|&d| {
            let (dx, dy) = DIRS[d];
            inside((cur.0 + dx, cur.1 + dy))
        });
        let Some(d) = step else {
            break;
        };
        // Jacob's rule alone misses starts that are re-entered from another
        // side (one-pixel-wide spurs); repeating the first move also closes.
        if cur == start {
            match first_step {
                None => first_step = Some(d),
                Some(d0) if d0 == d => {
                    chain.pop();
                    break;
                }
                Some(_) => {}
            }
        }
        let next = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
        let (bx, by) = DIRS[(d + 7) % 8];
        let behind = (cur.0 + bx, cur.1 + by);
        let next_back = dir_index(behind.0 - next.0, behind.1 - next.1);
        if next == start && next_back == WEST {
            break;
        }
        chain.push(next);
        cur = next;
        back = next_back;
    }
    chain
}
