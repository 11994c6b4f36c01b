//! Deterministic procedural generator of interaction scenes.
//!
//! The world is a 2-D side view: a floor line, one to three objects standing
//! on it, and an agent sprite that walks in from a canvas edge and executes a
//! verb program. Because every pixel is synthesized, scene/video pairs come
//! with exact affordance masks, trajectories, and a background-consistency
//! guarantee that evaluation code can rely on bit-for-bit.

pub mod dataset;

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// RGB color in [0,1].
pub type Color = [f32; 3];

pub mod palette {
    use super::Color;

    pub const BACKGROUND: Color = [0.92, 0.92, 0.92];
    pub const FLOOR: Color = [0.25, 0.25, 0.25];
    /// Head tone shared by every agent; detection keys on the body color.
    pub const SKIN: Color = [0.98, 0.80, 0.60];

    pub const CHAIR: Color = [0.55, 0.27, 0.07];
    pub const LADDER: Color = [0.45, 0.45, 0.55];
    pub const BALL: Color = [1.00, 0.45, 0.00];
    pub const BOX: Color = [0.72, 0.60, 0.30];
    pub const DOOR: Color = [0.40, 0.10, 0.10];
    pub const DOOR_HANDLE: Color = [0.85, 0.70, 0.20];
    pub const DOOR_OPEN: Color = [0.06, 0.06, 0.06];

    /// Agent body colors. Pairwise L∞ distance to every other palette entry
    /// is at least 0.15, far above the 0.05 detection tolerance.
    pub const APPEARANCES: [Color; 8] = [
        [0.85, 0.05, 0.05], // red
        [0.05, 0.70, 0.10], // green
        [0.10, 0.20, 0.90], // blue
        [0.85, 0.10, 0.80], // magenta
        [0.05, 0.75, 0.80], // cyan
        [0.95, 0.90, 0.05], // yellow
        [0.45, 0.05, 0.60], // purple
        [0.00, 0.40, 0.45], // dark teal
    ];
}

/// Action vocabulary, one verb per object kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Sit,
    Climb,
    Kick,
    Push,
    Open,
}

impl Verb {
    pub const ALL: [Verb; 5] = [Verb::Sit, Verb::Climb, Verb::Kick, Verb::Push, Verb::Open];

    pub fn id(self) -> usize {
        match self {
            Verb::Sit => 0,
            Verb::Climb => 1,
            Verb::Kick => 2,
            Verb::Push => 3,
            Verb::Open => 4,
        }
    }

    pub fn from_id(id: usize) -> Result<Verb> {
        Verb::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Config(format!("verb id {id} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Sit => "sit",
            Verb::Climb => "climb",
            Verb::Kick => "kick",
            Verb::Push => "push",
            Verb::Open => "open",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Chair,
    Ladder,
    Ball,
    Box,
    Door,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] =
        [ObjectKind::Chair, ObjectKind::Ladder, ObjectKind::Ball, ObjectKind::Box, ObjectKind::Door];

    /// Bounding box (height, width) in pixels.
    pub fn footprint(self) -> (usize, usize) {
        match self {
            ObjectKind::Chair => (6, 4),
            ObjectKind::Ladder => (10, 3),
            ObjectKind::Ball => (3, 3),
            ObjectKind::Box => (4, 4),
            ObjectKind::Door => (8, 4),
        }
    }

    pub fn verb(self) -> Verb {
        match self {
            ObjectKind::Chair => Verb::Sit,
            ObjectKind::Ladder => Verb::Climb,
            ObjectKind::Ball => Verb::Kick,
            ObjectKind::Box => Verb::Push,
            ObjectKind::Door => Verb::Open,
        }
    }

    pub fn color(self) -> Color {
        match self {
            ObjectKind::Chair => palette::CHAIR,
            ObjectKind::Ladder => palette::LADDER,
            ObjectKind::Ball => palette::BALL,
            ObjectKind::Box => palette::BOX,
            ObjectKind::Door => palette::DOOR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Chair => "chair",
            ObjectKind::Ladder => "ladder",
            ObjectKind::Ball => "ball",
            ObjectKind::Box => "box",
            ObjectKind::Door => "door",
        }
    }
}

/// An object instance anchored at the top-left corner of its bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub kind: ObjectKind,
    pub top: usize,
    pub left: usize,
}

impl PlacedObject {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.top..self.top + self.kind.footprint().0
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.left..self.left + self.kind.footprint().1
    }

    fn overlaps(&self, other: &PlacedObject, gap: usize) -> bool {
        let (h0, w0) = self.kind.footprint();
        let (h1, w1) = other.kind.footprint();
        let col_clear = self.left + w0 + gap <= other.left || other.left + w1 + gap <= self.left;
        let row_clear = self.top + h0 <= other.top || other.top + h1 <= self.top;
        !(col_clear || row_clear)
    }

    /// Interaction sub-region: the object part an agent occupies when acting
    /// on it (seat top of a chair, the ladder's climbing column, the cells
    /// beside a ball/box, the front of a door). Always within the bounding
    /// box plus its 1-cell neighborhood.
    pub fn interaction_region(&self, h: usize, w: usize) -> Mask {
        let mut m = Mask::empty(h, w);
        let (top, left) = (self.top as isize, self.left as isize);
        let mut set = |r: isize, c: isize| {
            if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                m.set(r as usize, c as usize, true);
            }
        };
        match self.kind {
            ObjectKind::Chair => {
                // Three rows ending at the seat surface, over the seat columns.
                for r in top + 1..=top + 3 {
                    for c in left + 1..=left + 3 {
                        set(r, c);
                    }
                }
            }
            ObjectKind::Ladder => {
                for r in top..top + 10 {
                    set(r, left + 1);
                }
            }
            ObjectKind::Ball => {
                for r in top..top + 3 {
                    set(r, left - 1);
                    set(r, left + 3);
                }
            }
            ObjectKind::Box => {
                for r in top..top + 4 {
                    set(r, left - 1);
                    set(r, left + 4);
                }
            }
            ObjectKind::Door => {
                for r in top + 3..top + 8 {
                    set(r, left - 1);
                    set(r, left + 4);
                }
            }
        }
        m
    }
}

/// Symbolic scene description; rendering and video synthesis are pure
/// functions of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub objects: Vec<PlacedObject>,
    pub floor_row: usize,
}

impl SceneSpec {
    pub fn empty(canvas_h: usize, canvas_w: usize) -> Self {
        SceneSpec { canvas_h, canvas_w, objects: Vec::new(), floor_row: floor_row(canvas_h) }
    }

    /// Verbs afforded by at least one object, in verb-id order.
    pub fn afforded_verbs(&self) -> Vec<Verb> {
        let mut verbs: Vec<Verb> = self.objects.iter().map(|o| o.kind.verb()).collect();
        verbs.sort();
        verbs.dedup();
        verbs
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            let (h, w) = o.kind.footprint();
            if o.top + h > self.canvas_h || o.left + w > self.canvas_w {
                return Err(Error::Generation(format!("{:?} leaves the canvas", o)));
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if a.overlaps(b, 0) {
                    return Err(Error::Generation(format!("{a:?} overlaps {b:?}")));
                }
            }
        }
        // A spawn cell on each canvas edge must stay free.
        let spawn_free = self
            .objects
            .iter()
            .all(|o| o.left > SPAWN_MARGIN && o.left + o.kind.footprint().1 + SPAWN_MARGIN < self.canvas_w);
        if !spawn_free {
            return Err(Error::Generation("no free spawn cell on the canvas edge".into()));
        }
        Ok(())
    }
}

/// Prompt: an action verb plus an agent appearance from the 8-color palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub verb: Verb,
    pub appearance: usize,
}

impl Prompt {
    pub fn new(verb: Verb, appearance: usize) -> Result<Self> {
        if appearance >= palette::APPEARANCES.len() {
            return Err(Error::Config(format!("appearance id {appearance} out of range")));
        }
        Ok(Prompt { verb, appearance })
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(h: usize, w: usize) -> Self {
        Mask { h, w, bits: vec![false; h * w] }
    }

    pub fn from_bits(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::shape("Mask::from_bits", format!("{h}x{w} vs {}", bits.len())));
        }
        Ok(Mask { h, w, bits })
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.w + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.w + c] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// Chebyshev dilation by `n` pixels.
    pub fn dilated(&self, n: usize) -> Mask {
        let mut out = Mask::empty(self.h, self.w);
        let n = n as isize;
        for r in 0..self.h as isize {
            for c in 0..self.w as isize {
                if self.bits[r as usize * self.w + c as usize] {
                    for dr in -n..=n {
                        for dc in -n..=n {
                            let (rr, cc) = (r + dr, c + dc);
                            if rr >= 0 && cc >= 0 && (rr as usize) < self.h && (cc as usize) < self.w {
                                out.set(rr as usize, cc as usize, true);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn contains_point(&self, r: f32, c: f32) -> bool {
        let (ri, ci) = (r.round() as isize, c.round() as isize);
        ri >= 0
            && ci >= 0
            && (ri as usize) < self.h
            && (ci as usize) < self.w
            && self.get(ri as usize, ci as usize)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            vec![self.h, self.w],
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dims")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Mask> {
        if t.rank() != 2 {
            return Err(Error::shape("Mask::from_tensor", format!("{:?}", t.dims())));
        }
        Ok(Mask {
            h: t.dims()[0],
            w: t.dims()[1],
            bits: t.data().iter().map(|&v| v > 0.5).collect(),
        })
    }
}

/// Scene-generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub frames: usize,
    pub kinds: Vec<ObjectKind>,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Sample kinds without replacement, so every verb in a scene maps to a
    /// unique object and prompts disambiguate targets.
    pub distinct_kinds: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            canvas_h: 32,
            canvas_w: 32,
            frames: 8,
            kinds: ObjectKind::ALL.to_vec(),
            min_objects: 1,
            max_objects: 3,
            distinct_kinds: true,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("world.kinds must be nonempty".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "world.min_objects..=max_objects range {}..={} is invalid",
                self.min_objects, self.max_objects
            )));
        }
        if self.distinct_kinds && self.max_objects > self.kinds.len() {
            return Err(Error::Config(format!(
                "world.distinct_kinds needs at least {} kinds, got {}",
                self.max_objects,
                self.kinds.len()
            )));
        }
        if self.frames < WALK_FRAMES + 1 {
            return Err(Error::Config(format!("world.frames must exceed {WALK_FRAMES}")));
        }
        let tallest = self.kinds.iter().map(|k| k.footprint().0).max().unwrap_or(0);
        if floor_row(self.canvas_h) < tallest {
            return Err(Error::Config(format!(
                "world.canvas_h {} too small for the tallest requested object",
                self.canvas_h
            )));
        }
        let widest = self.kinds.iter().map(|k| k.footprint().1).max().unwrap_or(0);
        if self.canvas_w < widest + 2 * (SPAWN_MARGIN + 1) {
            return Err(Error::Config(format!("world.canvas_w {} too narrow", self.canvas_w)));
        }
        Ok(())
    }
}

pub const SPAWN_MARGIN: usize = 3;
/// Minimum empty columns between object bounding boxes, so side interaction
/// regions never collide and the agent fits between objects.
const PLACEMENT_GAP: usize = 3;
const PLACEMENT_ATTEMPTS: usize = 100;
/// Frames `0..WALK_FRAMES` walk in from the spawn edge; the rest interact.
pub const WALK_FRAMES: usize = 4;

pub fn floor_row(canvas_h: usize) -> usize {
    canvas_h - 4
}

/// Rejection-samples a valid scene. Deterministic in `seed`.
pub fn sample_scene(seed: u64, config: &SceneConfig) -> Result<SceneSpec> {
    config.validate()?;
    let mut rng = rng::stream(seed, &[tag::SCENE]);
    let n = rng.random_range(config.min_objects..=config.max_objects);
    let kinds: Vec<ObjectKind> = if config.distinct_kinds {
        let mut pool = config.kinds.clone();
        pool.shuffle(&mut rng);
        pool.truncate(n);
        pool
    } else {
        (0..n).map(|_| config.kinds[rng.random_range(0..config.kinds.len())]).collect()
    };

    let floor = floor_row(config.canvas_h);
    // Each attempt lays out the whole configuration; sequential placement can
    // paint itself into a corner, so failed layouts are redrawn wholesale.
    let mut objects: Vec<PlacedObject> = Vec::new();
    'attempts: for attempt in 0..=PLACEMENT_ATTEMPTS {
        if attempt == PLACEMENT_ATTEMPTS {
            return Err(Error::Generation(format!(
                "failed to place {:?} after {PLACEMENT_ATTEMPTS} attempts",
                kinds.iter().map(|k| k.name()).collect::<Vec<_>>()
            )));
        }
        objects.clear();
        for &kind in &kinds {
            let (h, w) = kind.footprint();
            let lo = SPAWN_MARGIN + 1;
            let hi = config.canvas_w - SPAWN_MARGIN - 1 - w;
            let valid: Vec<usize> = (lo..=hi)
                .filter(|&left| {
                    let cand = PlacedObject { kind, top: floor - h, left };
                    objects.iter().all(|o| !o.overlaps(&cand, PLACEMENT_GAP))
                })
                .collect();
            if valid.is_empty() {
                continue 'attempts;
            }
            let left = valid[rng.random_range(0..valid.len())];
            objects.push(PlacedObject { kind, top: floor - h, left });
        }
        break;
    }

    let spec = SceneSpec {
        canvas_h: config.canvas_h,
        canvas_w: config.canvas_w,
        objects,
        floor_row: floor,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn blank_frame(h: usize, w: usize) -> Tensor<f32> {
    let mut t = Tensor::zeros(&[3, h, w]);
    paint_fill(&mut t, palette::BACKGROUND);
    t
}

fn paint_fill(frame: &mut Tensor<f32>, color: Color) {
    let hw = frame.dims()[1] * frame.dims()[2];
    let data = frame.data_mut();
    for ch in 0..3 {
        for i in 0..hw {
            data[ch * hw + i] = color[ch];
        }
    }
}

fn paint(frame: &mut Tensor<f32>, r: usize, c: usize, color: Color) {
    let (h, w) = (frame.dims()[1], frame.dims()[2]);
    debug_assert!(r < h && c < w);
    let hw = h * w;
    let data = frame.data_mut();
    for ch in 0..3 {
        data[ch * hw + r * w + c] = color[ch];
    }
}

/// Reads one RGB pixel from a `[3, H, W]` frame.
pub fn pixel(frame: &Tensor<f32>, r: usize, c: usize) -> Color {
    let (h, w) = (frame.dims()[1], frame.dims()[2]);
    let hw = h * w;
    [
        frame.data()[r * w + c],
        frame.data()[hw + r * w + c],
        frame.data()[2 * hw + r * w + c],
    ]
}

/// Per-frame object state during an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct ObjectState {
    /// Horizontal offset in pixels (ball roll, box slide).
    dx: isize,
    /// Door leaf swung open.
    open: bool,
}

/// Pixels an object paints, given its state. Single source of truth for
/// rendering and for the object-response bookkeeping.
fn object_pixels(
    obj: &PlacedObject,
    state: ObjectState,
    h: usize,
    w: usize,
) -> Vec<(usize, usize, Color)> {
    let mut px = Vec::new();
    let top = obj.top as isize;
    let left = obj.left as isize + state.dx;
    let mut put = |r: isize, c: isize, color: Color| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            px.push((r as usize, c as usize, color));
        }
    };
    let color = obj.kind.color();
    match obj.kind {
        ObjectKind::Chair => {
            for r in top..top + 4 {
                put(r, left, color); // backrest
            }
            for c in left..left + 4 {
                put(top + 3, c, color); // seat surface
            }
            for r in top + 4..top + 6 {
                put(r, left, color); // legs
                put(r, left + 3, color);
            }
        }
        ObjectKind::Ladder => {
            for r in top..top + 10 {
                put(r, left, color);
                put(r, left + 2, color);
                if (r - top) % 2 == 1 {
                    put(r, left + 1, color); // rung
                }
            }
        }
        ObjectKind::Ball => {
            for r in top..top + 3 {
                for c in left..left + 3 {
                    // Diamond: skip corners.
                    if !((r == top || r == top + 2) && (c == left || c == left + 2)) {
                        put(r, c, color);
                    }
                }
            }
        }
        ObjectKind::Box => {
            for r in top..top + 4 {
                for c in left..left + 4 {
                    put(r, c, color);
                }
            }
        }
        ObjectKind::Door => {
            if state.open {
                for r in top..top + 8 {
                    for c in left..left + 4 {
                        let edge = r == top || r == top + 7 || c == left || c == left + 3;
                        put(r, c, if edge { color } else { palette::DOOR_OPEN });
                    }
                }
            } else {
                for r in top..top + 8 {
                    for c in left..left + 4 {
                        if (r, c) == (top + 4, left + 2) {
                            put(r, c, palette::DOOR_HANDLE);
                        } else {
                            put(r, c, color);
                        }
                    }
                }
            }
        }
    }
    px
}

fn render_with_states(spec: &SceneSpec, states: &[ObjectState]) -> Tensor<f32> {
    let mut frame = blank_frame(spec.canvas_h, spec.canvas_w);
    for c in 0..spec.canvas_w {
        paint(&mut frame, spec.floor_row, c, palette::FLOOR);
    }
    for (obj, st) in spec.objects.iter().zip(states) {
        for (r, c, color) in object_pixels(obj, *st, spec.canvas_h, spec.canvas_w) {
            paint(&mut frame, r, c, color);
        }
    }
    frame
}

/// Renders the agent-free scene image as a `[3, H, W]` tensor.
pub fn render_scene(spec: &SceneSpec) -> Tensor<f32> {
    render_with_states(spec, &vec![ObjectState::default(); spec.objects.len()])
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pose {
    Standing,
    Crouched,
}

/// Sprite pixels for an agent whose feet-row/center-column anchor is
/// `(bottom, center)`. Returns `(row, col, is_body)`.
fn sprite_pixels(
    pose: Pose,
    bottom: isize,
    center: isize,
    h: usize,
    w: usize,
) -> Vec<(usize, usize, bool)> {
    let mut px = Vec::new();
    let mut put = |r: isize, c: isize, body: bool| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            px.push((r as usize, c as usize, body));
        }
    };
    match pose {
        Pose::Standing => {
            put(bottom - 4, center, false); // head
            for dc in -1..=1 {
                put(bottom - 3, center + dc, true); // shoulders and arms
            }
            put(bottom - 2, center, true);
            put(bottom - 1, center, true);
            put(bottom, center - 1, true); // legs
            put(bottom, center + 1, true);
        }
        Pose::Crouched => {
            put(bottom - 2, center, false); // head
            for dc in -1..=1 {
                put(bottom - 1, center + dc, true);
                put(bottom, center + dc, true);
            }
        }
    }
    px
}

/// A fully synthesized interaction video with exact bookkeeping.
#[derive(Debug, Clone)]
pub struct ActionVideo {
    /// `[T, 3, H, W]` pixel video with the agent present.
    pub video: Tensor<f32>,
    /// Per-frame centroid of the agent's body pixels, `(row, col)`.
    pub trajectory: Vec<(f32, f32)>,
    /// Index into `spec.objects` of the object acted upon.
    pub target_object: usize,
    /// Pixels covered by the agent sprite, per frame.
    pub agent_pixels: Vec<Vec<(usize, usize)>>,
    /// Pixels whose value differs from the static scene because an object
    /// responded (rolled ball, slid box, opened door), per frame.
    pub response_pixels: Vec<Vec<(usize, usize)>>,
}

/// Runs the verb program for `prompt` in `spec` over `frames` frames.
/// Deterministic in `seed`. The target object is the verb's unique match, or
/// a seeded choice when several objects afford the verb.
pub fn synth_action_video(
    spec: &SceneSpec,
    prompt: &Prompt,
    frames: usize,
    seed: u64,
) -> Result<ActionVideo> {
    spec.validate()?;
    if frames <= WALK_FRAMES {
        return Err(Error::Config(format!("need more than {WALK_FRAMES} frames")));
    }
    let candidates: Vec<usize> = spec
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.kind.verb() == prompt.verb)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Affordance(format!(
            "verb '{}' is not afforded by any object in the scene",
            prompt.verb.name()
        )));
    }
    let mut rng = rng::stream(seed, &[tag::VIDEO]);
    let target = candidates[rng.random_range(0..candidates.len())];
    let obj = spec.objects[target];
    let floor = spec.floor_row as isize;
    let feet = floor - 1;
    let (_, ow) = obj.kind.footprint();
    let (h, w) = (spec.canvas_h, spec.canvas_w);

    // Approach from the spawn side so the walk never crosses the target.
    let from_left: bool = rng.random_bool(0.5);
    let spawn_col = if from_left { 1 } else { w as isize - 2 };
    let side_anchor = if from_left {
        obj.left as isize - 2
    } else {
        obj.left as isize + ow as isize + 1
    };

    let approach: (isize, isize) = match prompt.verb {
        Verb::Sit => (obj.top as isize + 2, obj.left as isize + 2),
        Verb::Climb => (feet, obj.left as isize + 1),
        Verb::Kick | Verb::Push | Verb::Open => (feet, side_anchor),
    };

    let mut video_frames: Vec<Tensor<f32>> = Vec::with_capacity(frames);
    let mut trajectory = Vec::with_capacity(frames);
    let mut agent_pixels = Vec::with_capacity(frames);
    let mut response_pixels = Vec::with_capacity(frames);
    let scene = render_scene(spec);

    for f in 0..frames {
        let mut states = vec![ObjectState::default(); spec.objects.len()];
        let (pose, bottom, center) = if f < WALK_FRAMES {
            // Linear walk from the spawn edge, arriving on the last walk frame.
            let alpha = f as f32 / (WALK_FRAMES - 1) as f32;
            let r = feet as f32 + alpha * (approach.0 - feet) as f32;
            let c = spawn_col as f32 + alpha * (approach.1 - spawn_col) as f32;
            (Pose::Standing, r.round() as isize, c.round() as isize)
        } else {
            let k = (f - WALK_FRAMES) as isize;
            match prompt.verb {
                Verb::Sit => (Pose::Crouched, approach.0, approach.1),
                Verb::Climb => (Pose::Standing, feet - k, approach.1),
                Verb::Kick => {
                    // Contact first, then the ball rolls 2 px/frame away from
                    // the agent until it reaches a wall.
                    let roll = 2 * k;
                    let dx = if from_left {
                        roll.min((w - ow) as isize - obj.left as isize)
                    } else {
                        (-roll).max(-(obj.left as isize))
                    };
                    states[target].dx = dx;
                    (Pose::Standing, feet, approach.1)
                }
                Verb::Push => {
                    // Agent and box slide together 1 px/frame for two frames.
                    let slide = k.clamp(0, 2);
                    let dir = if from_left { 1 } else { -1 };
                    states[target].dx = dir * slide;
                    (Pose::Standing, feet, approach.1 + dir * slide)
                }
                Verb::Open => {
                    states[target].open = k >= 1;
                    (Pose::Standing, feet, approach.1)
                }
            }
        };

        let mut frame = render_with_states(spec, &states);
        let response: Vec<(usize, usize)> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(r, c)| pixel(&frame, r, c) != pixel(&scene, r, c))
            .collect();

        let body = palette::APPEARANCES[prompt.appearance];
        let sprite = sprite_pixels(pose, bottom, center, h, w);
        let mut covered = Vec::with_capacity(sprite.len());
        let (mut sr, mut sc, mut n) = (0.0f32, 0.0f32, 0usize);
        for &(r, c, is_body) in &sprite {
            paint(&mut frame, r, c, if is_body { body } else { palette::SKIN });
            covered.push((r, c));
            if is_body {
                sr += r as f32;
                sc += c as f32;
                n += 1;
            }
        }
        trajectory.push((sr / n.max(1) as f32, sc / n.max(1) as f32));
        agent_pixels.push(covered);
        response_pixels.push(response);
        video_frames.push(frame);
    }

    let mut data = Vec::with_capacity(frames * 3 * h * w);
    for f in video_frames {
        data.extend_from_slice(f.data());
    }
    Ok(ActionVideo {
        video: Tensor::new(vec![frames, 3, h, w], data)?,
        trajectory,
        target_object: target,
        agent_pixels,
        response_pixels,
    })
}

/// Union of interaction sub-regions over all objects affording `verb`.
pub fn affordance_mask(spec: &SceneSpec, verb: Verb) -> Result<Mask> {
    let mut any = false;
    let mut mask = Mask::empty(spec.canvas_h, spec.canvas_w);
    for obj in &spec.objects {
        if obj.kind.verb() == verb {
            mask.union_with(&obj.interaction_region(spec.canvas_h, spec.canvas_w));
            any = true;
        }
    }
    if !any {
        return Err(Error::Affordance(format!(
            "verb '{}' is not afforded by any object in the scene",
            verb.name()
        )));
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SceneConfig {
        SceneConfig::default()
    }

    #[test]
    fn sample_scene_is_deterministic() {
        let a = sample_scene(99, &cfg()).unwrap();
        let b = sample_scene(99, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forced_kinds_appear_exactly() {
        let config = SceneConfig {
            kinds: vec![ObjectKind::Chair, ObjectKind::Ladder],
            min_objects: 2,
            max_objects: 2,
            distinct_kinds: true,
            ..cfg()
        };
        for seed in 0..20 {
            let spec = sample_scene(seed, &config).unwrap();
            let mut kinds: Vec<ObjectKind> = spec.objects.iter().map(|o| o.kind).collect();
            kinds.sort();
            assert_eq!(kinds, vec![ObjectKind::Chair, ObjectKind::Ladder]);
        }
    }

    /// Brute-force footprint intersection over many seeds.
    #[test]
    fn thousand_scenes_never_overlap() {
        for seed in 0..1000 {
            let spec = sample_scene(seed, &cfg()).unwrap();
            spec.validate().unwrap();
            for (i, a) in spec.objects.iter().enumerate() {
                for b in &spec.objects[i + 1..] {
                    for r in b.rows() {
                        for c in b.cols() {
                            assert!(
                                !(a.rows().contains(&r) && a.cols().contains(&c)),
                                "seed {seed}: overlap at ({r},{c})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn coverage_over_500_scenes() {
        let mut verbs_seen = std::collections::HashSet::new();
        let mut kinds_seen = std::collections::HashSet::new();
        for seed in 0..500 {
            let spec = sample_scene(seed, &cfg()).unwrap();
            for o in &spec.objects {
                kinds_seen.insert(o.kind);
                verbs_seen.insert(o.kind.verb());
            }
        }
        assert_eq!(verbs_seen.len(), 5, "every verb appears");
        assert_eq!(kinds_seen.len(), 5, "every kind appears");
    }

    #[test]
    fn render_empty_scene_is_background_and_floor() {
        let spec = SceneSpec::empty(32, 32);
        let img = render_scene(&spec);
        for r in 0..32 {
            for c in 0..32 {
                let want = if r == spec.floor_row { palette::FLOOR } else { palette::BACKGROUND };
                assert_eq!(pixel(&img, r, c), want);
            }
        }
    }

    #[test]
    fn render_is_bit_identical() {
        let spec = sample_scene(7, &cfg()).unwrap();
        assert_eq!(render_scene(&spec), render_scene(&spec));
    }

    /// Every pixel the geometry table says an object paints carries the
    /// object's palette color in the rendered scene.
    #[test]
    fn object_pixels_take_palette_colors() {
        let spec = sample_scene(13, &cfg()).unwrap();
        let img = render_scene(&spec);
        for obj in &spec.objects {
            for (r, c, color) in object_pixels(obj, ObjectState::default(), 32, 32) {
                assert_eq!(pixel(&img, r, c), color, "{:?} at ({r},{c})", obj.kind);
            }
        }
    }

    fn single_object_scene(kind: ObjectKind, left: usize) -> SceneSpec {
        let (h, _) = kind.footprint();
        let floor = floor_row(32);
        SceneSpec {
            canvas_h: 32,
            canvas_w: 32,
            objects: vec![PlacedObject { kind, top: floor - h, left }],
            floor_row: floor,
        }
    }

    #[test]
    fn sit_ends_inside_seat_region() {
        let spec = single_object_scene(ObjectKind::Chair, 12);
        let prompt = Prompt::new(Verb::Sit, 2).unwrap();
        for seed in 0..8 {
            let out = synth_action_video(&spec, &prompt, 8, seed).unwrap();
            let mask = spec.objects[0].interaction_region(32, 32);
            let (r, c) = *out.trajectory.last().unwrap();
            assert!(mask.contains_point(r, c), "seed {seed}: centroid ({r},{c}) outside seat");
        }
    }

    #[test]
    fn kick_displaces_the_ball() {
        let spec = single_object_scene(ObjectKind::Ball, 14);
        let prompt = Prompt::new(Verb::Kick, 0).unwrap();
        let out = synth_action_video(&spec, &prompt, 8, 3).unwrap();
        let hw = 32 * 32;
        let frames = out.video.dims()[0];
        let first = &out.video.data()[0..3 * hw];
        let last = &out.video.data()[(frames - 1) * 3 * hw..frames * 3 * hw];
        let moved = first.iter().zip(last).filter(|(a, b)| a != b).count();
        assert!(moved > 0, "ball displacement must change pixels");
        assert!(!out.response_pixels.last().unwrap().is_empty());
    }

    #[test]
    fn background_outside_agent_and_response_is_exact() {
        let config = cfg();
        for seed in [1u64, 5, 9, 33] {
            let spec = sample_scene(seed, &config).unwrap();
            let scene = render_scene(&spec);
            for verb in spec.afforded_verbs() {
                let prompt = Prompt::new(verb, (seed % 8) as usize).unwrap();
                let out = synth_action_video(&spec, &prompt, 8, seed ^ 0xabc).unwrap();
                let frames = out.video.dims()[0];
                let hw = 32 * 32;
                for f in 0..frames {
                    let mut allowed = Mask::empty(32, 32);
                    for &(r, c) in &out.agent_pixels[f] {
                        allowed.set(r, c, true);
                    }
                    for &(r, c) in &out.response_pixels[f] {
                        allowed.set(r, c, true);
                    }
                    for r in 0..32 {
                        for c in 0..32 {
                            if allowed.get(r, c) {
                                continue;
                            }
                            for ch in 0..3 {
                                let v = out.video.data()[f * 3 * hw + ch * hw + r * 32 + c];
                                let s = scene.data()[ch * hw + r * 32 + c];
                                assert!(v == s, "frame {f} pixel ({r},{c}) channel {ch} drifted");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn agent_overlaps_mask_during_interact_phase() {
        for seed in 0..30u64 {
            let spec = sample_scene(seed, &cfg()).unwrap();
            for verb in spec.afforded_verbs() {
                let prompt = Prompt::new(verb, 1).unwrap();
                let out = synth_action_video(&spec, &prompt, 8, seed).unwrap();
                let mask = spec.objects[out.target_object].interaction_region(32, 32);
                assert!(mask.count() > 0);
                for f in WALK_FRAMES..out.video.dims()[0] {
                    let touches = out.agent_pixels[f].iter().any(|&(r, c)| mask.get(r, c));
                    assert!(touches, "seed {seed} verb {} frame {f}", verb.name());
                }
            }
        }
    }

    #[test]
    fn video_synthesis_is_deterministic() {
        let spec = sample_scene(21, &cfg()).unwrap();
        let verb = spec.afforded_verbs()[0];
        let prompt = Prompt::new(verb, 4).unwrap();
        let a = synth_action_video(&spec, &prompt, 8, 77).unwrap();
        let b = synth_action_video(&spec, &prompt, 8, 77).unwrap();
        assert_eq!(a.video, b.video);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn affordance_mask_matches_geometry_table() {
        let spec = single_object_scene(ObjectKind::Chair, 10);
        let mask = affordance_mask(&spec, Verb::Sit).unwrap();
        let top = spec.objects[0].top;
        for r in 0..32 {
            for c in 0..32 {
                let inside = (top + 1..=top + 3).contains(&r) && (11..=13).contains(&c);
                assert_eq!(mask.get(r, c), inside, "({r},{c})");
            }
        }
    }

    #[test]
    fn affordance_mask_unions_same_kind_objects() {
        let floor = floor_row(32);
        let spec = SceneSpec {
            canvas_h: 32,
            canvas_w: 32,
            objects: vec![
                PlacedObject { kind: ObjectKind::Chair, top: floor - 6, left: 5 },
                PlacedObject { kind: ObjectKind::Chair, top: floor - 6, left: 20 },
            ],
            floor_row: floor,
        };
        let union = affordance_mask(&spec, Verb::Sit).unwrap();
        let a = spec.objects[0].interaction_region(32, 32);
        let b = spec.objects[1].interaction_region(32, 32);
        assert_eq!(union.count(), a.count() + b.count());
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(union.get(r, c), a.get(r, c) || b.get(r, c));
            }
        }
    }

    #[test]
    fn unafforded_verb_errors() {
        let spec = single_object_scene(ObjectKind::Chair, 10);
        assert!(matches!(affordance_mask(&spec, Verb::Climb), Err(Error::Affordance(_))));
        let prompt = Prompt::new(Verb::Climb, 0).unwrap();
        assert!(matches!(synth_action_video(&spec, &prompt, 8, 0), Err(Error::Affordance(_))));
    }

    /// Different-verb samples in a disambiguation scene target disjoint masks.
    #[test]
    fn disambiguation_masks_are_disjoint() {
        for seed in 0..50u64 {
            let spec = sample_scene(seed, &cfg()).unwrap();
            for (i, a) in spec.objects.iter().enumerate() {
                for b in &spec.objects[i + 1..] {
                    let ma = a.interaction_region(32, 32);
                    let mb = b.interaction_region(32, 32);
                    let inter =
                        ma.bits().iter().zip(mb.bits()).filter(|(&x, &y)| x && y).count();
                    assert_eq!(inter, 0, "seed {seed}: masks intersect");
                }
            }
        }
    }
}
