//! Versioned binary checkpoint blob.
//!
//! Layout: 5-byte magic `SGIA1`, u32 version, u64-length-prefixed JSON
//! metadata (template, layouts, counts, config), then raw little-endian f64
//! sections for the surfel parameters, latent-net weights, and environment
//! map parameters.

use super::{SkinnedTemplate, Surfel, SurfelSet, N_LATENT, SH_COEFFS};
use crate::math::{V3, V4};
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"SGIA1";
const VERSION: u32 = 1;

/// Everything needed to re-instantiate a trained model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub surfels: SurfelSet,
    pub template: SkinnedTemplate,
    /// Layer sizes of the latent-bone MLP, e.g. `[in, 64, 64, out]`.
    pub net_layout: Vec<usize>,
    /// Flattened MLP weights and biases, layer by layer.
    pub net_weights: Vec<f64>,
    /// Pre-activation environment cubemap parameters, `6 * res * res * 3`.
    pub env_params: Vec<f64>,
    pub env_res: usize,
    pub config_toml: String,
    pub step: u64,
    pub stage: u8,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    template: SkinnedTemplate,
    net_layout: Vec<usize>,
    env_res: usize,
    config_toml: String,
    step: u64,
    stage: u8,
    n_surfels: usize,
    n_bones: usize,
    sh_degree: usize,
}

fn surfel_floats(n_bones: usize) -> usize {
    3 + 4 + 2 + 1 + 3 * SH_COEFFS + 3 + 1 + 1 + N_LATENT + n_bones
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let meta = Meta {
        template: ckpt.template.clone(),
        net_layout: ckpt.net_layout.clone(),
        env_res: ckpt.env_res,
        config_toml: ckpt.config_toml.clone(),
        step: ckpt.step,
        stage: ckpt.stage,
        n_surfels: ckpt.surfels.len(),
        n_bones: ckpt.surfels.n_bones,
        sh_degree: ckpt.surfels.sh_degree,
    };
    let json = serde_json::to_vec(&meta)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;

    let n_bones = ckpt.surfels.n_bones;
    let mut flat = Vec::with_capacity(ckpt.surfels.len() * surfel_floats(n_bones));
    for s in &ckpt.surfels.surfels {
        flat.extend_from_slice(s.position.as_slice());
        flat.extend_from_slice(s.quat.as_slice());
        flat.extend_from_slice(&s.scale);
        flat.push(s.opacity);
        for c in &s.sh {
            flat.extend_from_slice(c);
        }
        flat.extend_from_slice(s.albedo.as_slice());
        flat.push(s.roughness);
        flat.push(s.metallic);
        flat.extend_from_slice(&s.wt);
        flat.extend_from_slice(&s.dw);
    }
    write_f64s(&mut w, &flat)?;
    write_f64s(&mut w, &ckpt.net_weights)?;
    write_f64s(&mut w, &ckpt.env_params)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(f);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SgiaError::BadFormat("not an SGIA1 checkpoint".into()));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != VERSION {
        return Err(SgiaError::BadFormat(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let meta: Meta = serde_json::from_slice(&json)?;

    let flat = read_f64s(&mut r)?;
    let per = surfel_floats(meta.n_bones);
    if flat.len() != meta.n_surfels * per {
        return Err(SgiaError::BadFormat("surfel section length mismatch".into()));
    }
    let mut surfels = Vec::with_capacity(meta.n_surfels);
    for chunk in flat.chunks_exact(per) {
        let mut i = 0;
        let mut take = |n: usize| {
            let s = &chunk[i..i + n];
            i += n;
            s.to_vec()
        };
        let pos = take(3);
        let q = take(4);
        let sc = take(2);
        let op = take(1);
        let shf = take(3 * SH_COEFFS);
        let al = take(3);
        let ro = take(1);
        let me = take(1);
        let wt = take(N_LATENT);
        let dw = take(meta.n_bones);
        let mut sh = [[0.0; 3]; SH_COEFFS];
        for (k, c) in sh.iter_mut().enumerate() {
            c.copy_from_slice(&shf[3 * k..3 * k + 3]);
        }
        surfels.push(Surfel {
            position: V3::new(pos[0], pos[1], pos[2]),
            quat: V4::new(q[0], q[1], q[2], q[3]),
            scale: [sc[0], sc[1]],
            opacity: op[0],
            sh,
            albedo: V3::new(al[0], al[1], al[2]),
            roughness: ro[0],
            metallic: me[0],
            dw,
            wt: wt.try_into().unwrap(),
        });
    }
    let net_weights = read_f64s(&mut r)?;
    let env_params = read_f64s(&mut r)?;
    Ok(Checkpoint {
        surfels: SurfelSet {
            surfels,
            sh_degree: meta.sh_degree,
            n_bones: meta.n_bones,
        },
        template: meta.template,
        net_layout: meta.net_layout,
        net_weights,
        env_params,
        env_res: meta.env_res,
        config_toml: meta.config_toml,
        step: meta.step,
        stage: meta.stage,
    })
}
