//! Plain `key = value` configuration. Unknown keys are errors; `#` starts a
//! comment.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{parse_error, read_text, IoError};
use crate::inference::{ChainConfig, Model};
use crate::wreath_process::GammaParam;

/// Everything a command line run can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    pub chain: ChainConfig,
    /// Binarization threshold applied to input images.
    pub threshold: f64,
    /// Dataset images include noise and blur.
    pub noisy: bool,
    /// Dataset items must not touch the canvas border.
    pub require_margin: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::default(),
            chain: ChainConfig::default(),
            threshold: 0.5,
            noisy: true,
            require_margin: false,
        }
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let p = &mut self.model.prior;
        let n = &mut self.model.noise;
        let r = &mut self.model.render;
        let c = &mut self.chain;
        match key {
            "p_single" => p.p_single = num(v)?,
            "p_full" => p.p_full = num(v)?,
            "b_max" => p.b_max = num(v)?,
            "max_levels" => p.max_levels = num(v)?,
            "max_copies" => p.max_copies = num(v)?,
            "blur_width_scale" => p.b_w = num(v)?,
            "blur_sigma_scale" => p.b_sigma = num(v)?,
            "rot_orders" => {
                p.rot_orders = v
                    .split(',')
                    .map(|x| num(x.trim()))
                    .collect::<Result<_, _>>()?
            }
            "allow_rot_full" => p.allow_rot_full = flag(v)?,
            "lambda_min" => p.lambda_range.0 = num(v)?,
            "lambda_max" => p.lambda_range.1 = num(v)?,
            "trans_shape" => n.trans_shape = num(v)?,
            "trans_rate" => n.trans_rate = num(v)?,
            "gamma_param" => {
                n.gamma_param = match v {
                    "shape_rate" => GammaParam::ShapeRate,
                    "shape_scale" => GammaParam::ShapeScale,
                    _ => return Err(format!("expected shape_rate or shape_scale, found {v:?}")),
                }
            }
            "rot_full_order" => n.rot_full_order = num(v)?,
            "segment_controls" => n.segment_controls = num(v)?,
            "circle_controls" => n.circle_controls = num(v)?,
            "width" => r.width = num(v)?,
            "height" => r.height = num(v)?,
            "unit_scale" => r.unit_scale = num(v)?,
            "stroke_width" => r.stroke_width = num(v)?,
            "supersample" => r.supersample = num(v)?,
            "p_min" => self.model.p_min = num(v)?,
            "iterations" => c.iterations = num(v)?,
            "thin" => c.thin = num(v)?,
            "burn_in" => c.burn_in = num(v)?,
            "level_pick_decay" => c.level_pick_decay = num(v)?,
            "weight_noise" => c.move_weights.noise = num(v)?,
            "weight_blur" => c.move_weights.blur = num(v)?,
            "weight_lambda" => c.move_weights.lambda = num(v)?,
            "weight_shape_within" => c.move_weights.shape_within = num(v)?,
            "weight_shape_transdim" => c.move_weights.shape_transdim = num(v)?,
            "noiseless" => c.noiseless = flag(v)?,
            "freeze_blur" => c.freeze_blur = flag(v)?,
            "freeze_lambda" => c.freeze_lambda = flag(v)?,
            "record_noise" => c.record_noise = flag(v)?,
            "progress_every" => c.progress_every = num(v)?,
            "threshold" => self.threshold = num(v)?,
            "noisy" => self.noisy = flag(v)?,
            "require_margin" => self.require_margin = flag(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// All keys with their current values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.model.prior;
        let n = &self.model.noise;
        let r = &self.model.render;
        let c = &self.chain;
        let w = &c.move_weights;
        let orders: Vec<String> = p.rot_orders.iter().map(u32::to_string).collect();
        vec![
            ("p_single", format!("{:?}", p.p_single)),
            ("p_full", format!("{:?}", p.p_full)),
            ("b_max", p.b_max.to_string()),
            ("max_levels", p.max_levels.to_string()),
            ("max_copies", p.max_copies.to_string()),
            ("blur_width_scale", format!("{:?}", p.b_w)),
            ("blur_sigma_scale", format!("{:?}", p.b_sigma)),
            ("rot_orders", orders.join(",")),
            ("allow_rot_full", p.allow_rot_full.to_string()),
            ("lambda_min", format!("{:?}", p.lambda_range.0)),
            ("lambda_max", format!("{:?}", p.lambda_range.1)),
            ("trans_shape", format!("{:?}", n.trans_shape)),
            ("trans_rate", format!("{:?}", n.trans_rate)),
            (
                "gamma_param",
                match n.gamma_param {
                    GammaParam::ShapeRate => "shape_rate",
                    GammaParam::ShapeScale => "shape_scale",
                }
                .to_string(),
            ),
            ("rot_full_order", n.rot_full_order.to_string()),
            ("segment_controls", n.segment_controls.to_string()),
            ("circle_controls", n.circle_controls.to_string()),
            ("width", r.width.to_string()),
            ("height", r.height.to_string()),
            ("unit_scale", format!("{:?}", r.unit_scale)),
            ("stroke_width", format!("{:?}", r.stroke_width)),
            ("supersample", r.supersample.to_string()),
            ("p_min", format!("{:?}", self.model.p_min)),
            ("iterations", c.iterations.to_string()),
            ("thin", c.thin.to_string()),
            ("burn_in", c.burn_in.to_string()),
            ("level_pick_decay", format!("{:?}", c.level_pick_decay)),
            ("weight_noise", format!("{:?}", w.noise)),
            ("weight_blur", format!("{:?}", w.blur)),
            ("weight_lambda", format!("{:?}", w.lambda)),
            ("weight_shape_within", format!("{:?}", w.shape_within)),
            ("weight_shape_transdim", format!("{:?}", w.shape_transdim)),
            ("noiseless", c.noiseless.to_string()),
            ("freeze_blur", c.freeze_blur.to_string()),
            ("freeze_lambda", c.freeze_lambda.to_string()),
            ("record_noise", c.record_noise.to_string()),
            ("progress_every", c.progress_every.to_string()),
            ("threshold", format!("{:?}", self.threshold)),
            ("noisy", self.noisy.to_string()),
            ("require_margin", self.require_margin.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Applies the settings in `text` on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_error(i + 1, "expected key = value"))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|m| parse_error(i + 1, format!("{}: {m}", k.trim())))?;
    }
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig, IoError> {
    parse_config(&read_text(path)?).map_err(|e| e.at(path))
}
