use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{stream_seed, HarnessError, MRO_PROMPTS};
use crate::assign::BBox;
use crate::correction::{ObjectMask, ObjectTokens, SegmentationSet, TokenRoles, REFERENCE_SIZE};
use crate::parser::{Conflicts, Parser};

/// Map channels reserve index 0 for a start-of-text token.
pub const TOKEN_OFFSET: usize = 1;

/// A planted object: a disk on the reference plane tied to a token span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioObject {
    pub object_id: usize,
    /// `(x, y)` in reference pixels.
    pub center: (f32, f32),
    pub radius: f32,
    /// Word indices of the whole phrase.
    pub phrase: Range<usize>,
    /// Word indices of the core noun.
    pub core: Range<usize>,
}

impl ScenarioObject {
    pub fn truth_box(&self, class_id: usize) -> BBox {
        let (cx, cy) = self.center;
        let r = self.radius;
        BBox::new(cx - r, cy - r, 2.0 * r, 2.0 * r, 1.0, class_id).clamped(REFERENCE_SIZE as f32)
    }

    /// Distance from the disk center to the center of pixel `(row, col)` of
    /// a `resolution`-sided plane, in reference pixels.
    pub fn distance(&self, row: usize, col: usize, resolution: usize) -> f32 {
        let k = REFERENCE_SIZE as f32 / resolution as f32;
        let dx = (col as f32 + 0.5) * k - self.center.0;
        let dy = (row as f32 + 0.5) * k - self.center.1;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn core_channels(&self) -> Vec<usize> {
        self.core.clone().map(|t| t + TOKEN_OFFSET).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub prompt: String,
    /// Number of words; the maps carry one more channel.
    pub words: usize,
    pub objects: Vec<ScenarioObject>,
    /// How strongly each object's tokens light up the other objects' disks.
    pub leak: f32,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Attaches disks to the phrases a parser finds in `prompt`, in order.
    pub fn from_prompt(
        parser: &Parser,
        prompt: &str,
        disks: &[((f32, f32), f32)],
        leak: f32,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let structure = parser.analyze(prompt)?;
        if structure.noun_phrases.len() != disks.len() {
            return Err(HarnessError::Config(format!(
                "prompt has {} object phrases but {} disks were given",
                structure.noun_phrases.len(),
                disks.len()
            )));
        }
        let objects = structure
            .noun_phrases
            .iter()
            .zip(disks)
            .map(|(p, &(center, radius))| ScenarioObject {
                object_id: p.object_id,
                center,
                radius,
                phrase: p.span.clone(),
                core: p.core_tokens.clone(),
            })
            .collect();
        let spec = Self {
            prompt: prompt.to_string(),
            words: structure.tokens.len(),
            objects,
            leak,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A benchmark-style two-object scene: a random prompt from the
    /// related-object list and two disks that do not touch.
    pub fn two_object(seed: u64, leak: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[seed, 0x5ce0]));
        let prompt = MRO_PROMPTS[rng.gen_range(0..MRO_PROMPTS.len())];
        let disks = random_disks(&mut rng, 2);
        Self::from_prompt(&Parser::default(), prompt, &disks, leak, seed).expect("benchmark prompts have two objects")
    }

    /// A scene with `count` (1 or 2) objects for detector training.
    pub fn random(seed: u64, count: usize, leak: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[seed, 0xda7a]));
        let prompt = MRO_PROMPTS[rng.gen_range(0..MRO_PROMPTS.len())];
        let disks = random_disks(&mut rng, 2);
        let mut spec =
            Self::from_prompt(&Parser::default(), prompt, &disks, leak, seed).expect("benchmark prompts have two objects");
        spec.objects.truncate(count.clamp(1, 2));
        spec
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let frame = REFERENCE_SIZE as f32;
        if !(0.0..=1.0).contains(&self.leak) {
            return Err(HarnessError::Config(format!("leak {} outside [0, 1]", self.leak)));
        }
        for o in &self.objects {
            if !(o.radius > 0.0) {
                return Err(HarnessError::Config(format!("object {} has radius {}", o.object_id, o.radius)));
            }
            let (x, y) = o.center;
            if !(0.0..frame).contains(&x) || !(0.0..frame).contains(&y) {
                return Err(HarnessError::Config(format!("object {} centered outside the frame", o.object_id)));
            }
            if o.phrase.end > self.words || o.core.start < o.phrase.start || o.core.end > o.phrase.end {
                return Err(HarnessError::Config(format!("object {} has inconsistent token spans", o.object_id)));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.words + TOKEN_OFFSET
    }

    pub fn object_ids(&self) -> Vec<usize> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    /// Channel roles; every pair of objects conflicts.
    pub fn roles(&self) -> TokenRoles {
        let mut conflicts = Conflicts::default();
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                conflicts.insert(a.object_id, b.object_id);
            }
        }
        TokenRoles {
            objects: self
                .objects
                .iter()
                .map(|o| ObjectTokens {
                    object_id: o.object_id,
                    core_channels: o.core_channels(),
                    phrase_channels: o.phrase.clone().map(|t| t + TOKEN_OFFSET).collect(),
                })
                .collect(),
            conflicts,
            channels: self.channels(),
        }
    }

    /// The planted disks as a segmentation; a pixel shared by two disks
    /// goes to the smaller one.
    pub fn truth_segmentation(&self) -> SegmentationSet {
        let s = REFERENCE_SIZE;
        let mut set = SegmentationSet::default();
        for o in &self.objects {
            let pixels = (0..s * s).map(|px| o.distance(px / s, px % s, s) <= o.radius).collect();
            set.masks.insert(
                o.object_id,
                ObjectMask {
                    pixels,
                    threshold: None,
                    box_area: o.truth_box(o.object_id).area(),
                },
            );
        }
        for px in 0..s * s {
            let owner = self
                .objects
                .iter()
                .filter(|o| set.masks[&o.object_id].pixels[px])
                .min_by(|a, b| a.radius.total_cmp(&b.radius).then(a.object_id.cmp(&b.object_id)))
                .map(|o| o.object_id);
            for (id, m) in set.masks.iter_mut() {
                m.pixels[px] = m.pixels[px] && Some(*id) == owner;
            }
        }
        set
    }
}

fn random_disks(rng: &mut impl Rng, count: usize) -> Vec<((f32, f32), f32)> {
    let frame = REFERENCE_SIZE as f32;
    loop {
        let disks: Vec<((f32, f32), f32)> = (0..count)
            .map(|_| {
                let r: f32 = rng.gen_range(2.5..4.5);
                let x = rng.gen_range(r..frame - r);
                let y = rng.gen_range(r..frame - r);
                ((x, y), r)
            })
            .collect();
        let apart = disks.iter().enumerate().all(|(i, a)| {
            disks[i + 1..].iter().all(|b| {
                let d = ((a.0 .0 - b.0 .0).powi(2) + (a.0 .1 - b.0 .1).powi(2)).sqrt();
                d >= a.1 + b.1 + 1.0
            })
        });
        if apart {
            return disks;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_object_scenes_are_valid_and_reproducible() {
        for seed in 0..50 {
            let a = ScenarioSpec::two_object(seed, 0.6);
            assert_eq!(a, ScenarioSpec::two_object(seed, 0.6));
            assert_eq!(a.objects.len(), 2);
            a.validate().unwrap();
            let seg = a.truth_segmentation();
            assert!(seg.is_disjoint());
            assert!(seg.masks.values().all(|m| m.count() > 0));
        }
    }

    #[test]
    fn roles_offset_channels() {
        let spec = ScenarioSpec::from_prompt(
            &Parser::default(),
            "a red car and a white sheep",
            &[((4.0, 4.0), 3.0), ((11.0, 11.0), 3.0)],
            0.3,
            1,
        )
        .unwrap();
        let roles = spec.roles();
        assert_eq!(roles.channels, 8);
        assert_eq!(roles.objects[0].core_channels, vec![3]);
        assert_eq!(roles.objects[1].phrase_channels, vec![5, 6, 7]);
        assert!(roles.conflicts.conflicts(0, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        let p = Parser::default();
        assert!(ScenarioSpec::from_prompt(&p, "a red car", &[((4.0, 4.0), 3.0), ((9.0, 9.0), 2.0)], 0.1, 0).is_err());
        assert!(ScenarioSpec::from_prompt(&p, "a red car", &[((4.0, 4.0), 0.0)], 0.1, 0).is_err());
        assert!(ScenarioSpec::from_prompt(&p, "a red car", &[((4.0, 40.0), 2.0)], 0.1, 0).is_err());
        assert!(ScenarioSpec::from_prompt(&p, "a red car", &[((4.0, 4.0), 2.0)], 1.5, 0).is_err());
    }
}
