//! The four reference architectures. Flatten sizes are derived by shape
//! propagation rather than written down, so they double as a consistency check.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::layer::{LayerSpec, Shape};
use crate::network::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Mnist,
    Cifar10,
    Att,
    Facescrub,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Mnist, Preset::Cifar10, Preset::Att, Preset::Facescrub];

    pub fn id(self) -> u8 {
        match self {
            Preset::Mnist => 0,
            Preset::Cifar10 => 1,
            Preset::Att => 2,
            Preset::Facescrub => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mnist => "mnist",
            Preset::Cifar10 => "cifar10",
            Preset::Att => "att",
            Preset::Facescrub => "facescrub",
        }
    }

    pub fn default_classes(self) -> usize {
        match self {
            Preset::Mnist | Preset::Cifar10 => 10,
            Preset::Att => 40,
            Preset::Facescrub => 530,
        }
    }

    /// Per-sample input: MNIST digits padded to 32×32, CIFAR colour 32×32,
    /// AT&T 92×112 portraits, FaceScrub 224×224 grayscale crops.
    pub fn input_shape(self) -> Shape {
        match self {
            Preset::Mnist => Shape::image(1, 32, 32),
            Preset::Cifar10 => Shape::image(3, 32, 32),
            Preset::Att => Shape::image(1, 112, 92),
            Preset::Facescrub => Shape::image(1, 224, 224),
        }
    }

    pub fn default_batch(self) -> usize {
        match self {
            Preset::Cifar10 => 128,
            _ => 64,
        }
    }

    /// Face presets accept any class count ≥ 2 (generic labeled directories);
    /// the 10-class presets are fixed.
    fn check_classes(self, classes: usize) -> Result<()> {
        let ok = match self {
            Preset::Mnist | Preset::Cifar10 => classes == 10,
            Preset::Att | Preset::Facescrub => classes >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "preset {self} cannot produce {classes} classes (expects {})",
                self.default_classes()
            )))
        }
    }

    pub fn layer_specs(self, classes: usize) -> Result<Vec<LayerSpec>> {
        self.check_classes(classes)?;
        let input = self.input_shape();
        let (mut body, tail): (Vec<LayerSpec>, fn(usize, usize) -> Vec<LayerSpec>) = match self {
            Preset::Mnist => (
                vec![
                    LayerSpec::conv(1, 32, 5, 0),
                    LayerSpec::leaky(),
                    LayerSpec::pool(3),
                    LayerSpec::conv(32, 64, 5, 0),
                    LayerSpec::leaky(),
                    LayerSpec::pool(2),
                ],
                |flat, classes| {
                    vec![
                        LayerSpec::Linear { inputs: flat, outputs: 200 },
                        LayerSpec::leaky(),
                        LayerSpec::Dropout { p: 0.5 },
                        LayerSpec::Linear { inputs: 200, outputs: classes },
                        LayerSpec::LogSoftMax,
                    ]
                },
            ),
            Preset::Cifar10 => {
                // (out channels, dropout after ReLU or None) per conv; None ends a pooled group
                let stages: [&[(usize, Option<f64>)]; 5] = [
                    &[(64, Some(0.3)), (64, None)],
                    &[(128, Some(0.4)), (128, None)],
                    &[(256, Some(0.4)), (256, Some(0.4)), (256, None)],
                    &[(512, Some(0.4)), (512, Some(0.4)), (512, None)],
                    &[(512, Some(0.4)), (512, Some(0.4)), (512, None)],
                ];
                let mut body = vec![LayerSpec::BatchFlip { p: 0.5 }];
                let mut ch = 3;
                for stage in stages {
                    for &(out, drop) in stage {
                        body.push(LayerSpec::conv(ch, out, 3, 1));
                        body.push(LayerSpec::BatchNorm2d { features: out });
                        body.push(LayerSpec::Relu);
                        if let Some(p) = drop {
                            body.push(LayerSpec::Dropout { p });
                        }
                        ch = out;
                    }
                    body.push(LayerSpec::pool(2));
                }
                (body, |flat, classes| {
                    vec![
                        LayerSpec::Dropout { p: 0.5 },
                        LayerSpec::Linear { inputs: flat, outputs: 512 },
                        LayerSpec::BatchNorm1d { features: 512 },
                        LayerSpec::Relu,
                        LayerSpec::Dropout { p: 0.5 },
                        LayerSpec::Linear { inputs: 512, outputs: classes },
                    ]
                })
            }
            Preset::Att | Preset::Facescrub => {
                let last_pool = if self == Preset::Att { 3 } else { 2 };
                (
                    vec![
                        LayerSpec::conv(1, 32, 3, 1),
                        LayerSpec::leaky(),
                        LayerSpec::pool(2),
                        LayerSpec::conv(32, 64, 3, 1),
                        LayerSpec::leaky(),
                        LayerSpec::pool(2),
                        LayerSpec::conv(64, 128, 3, 1),
                        LayerSpec::leaky(),
                        LayerSpec::pool(last_pool),
                    ],
                    if self == Preset::Att {
                        |flat, classes| {
                            vec![
                                LayerSpec::Linear { inputs: flat, outputs: 1024 },
                                LayerSpec::leaky(),
                                LayerSpec::Dropout { p: 0.5 },
                                LayerSpec::Linear { inputs: 1024, outputs: classes },
                                LayerSpec::LogSoftMax,
                            ]
                        }
                    } else {
                        |flat, classes| {
                            vec![
                                LayerSpec::Linear { inputs: flat, outputs: 1024 },
                                LayerSpec::leaky(),
                                LayerSpec::Dropout { p: 0.5 },
                                LayerSpec::Linear { inputs: 1024, outputs: classes },
                            ]
                        }
                    },
                )
            }
        };
        let mut shape = input;
        for (i, spec) in body.iter().enumerate() {
            shape = spec.output_shape(shape).map_err(|msg| Error::Shape {
                layer: i,
                layer_name: spec.to_string(),
                msg,
            })?;
        }
        let flat = shape.len();
        body.push(LayerSpec::Reshape { features: flat });
        body.extend(tail(flat, classes));
        Ok(body)
    }

    /// The flatten size feeding the classifier head.
    pub fn flatten_size(self) -> usize {
        self.layer_specs(self.default_classes())
            .expect("presets are consistent")
            .iter()
            .find_map(|s| match s {
                LayerSpec::Reshape { features } => Some(*features),
                _ => None,
            })
            .expect("every preset flattens")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Argument(format!("unknown preset {s:?} (expected mnist, cifar10, att or facescrub)"))
            })
    }
}

pub fn build_preset<F: Float>(preset: Preset, classes: usize, seed: u64) -> Result<Network<F>> {
    Ok(Network::new(preset.input_shape(), preset.layer_specs(classes)?, seed)?.with_preset(preset))
}
