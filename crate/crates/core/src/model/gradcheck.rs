use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{circle_loss, Model};
use crate::linking::{LinkMatrix, MaskTensor};
use crate::corpus::{BBox, Document, Entity, KvLink, Role, Span, Token};
use crate::serialize::{assemble_input, InputSample, Question, Vocab};
use crate::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per tensor, in parameter order.
    pub per_tensor: Vec<(String, f64)>,
    pub coordinates: usize,
}

fn loss(model: &Model<f64>, sample: &InputSample, gold: &LinkMatrix, mask: &MaskTensor) -> Result<f64> {
    Ok(circle_loss(model.scores(sample, mask)?.view(), gold, mask))
}

/// Rows of each embedding table the sample touches, by tensor name.
fn used_rows(sample: &InputSample, name: &str) -> Option<BTreeSet<usize>> {
    let rows: BTreeSet<usize> = match name {
        "embed.token" => sample.token_ids.iter().map(|&v| v as usize).collect(),
        "embed.position" => sample.position_ids.iter().map(|&v| v as usize).collect(),
        "embed.segment" => sample.segment_ids.iter().map(|&v| v as usize).collect(),
        _ => {
            let c = ["embed.layout_x1", "embed.layout_y1", "embed.layout_x2", "embed.layout_y2"]
                .iter()
                .position(|n| *n == name)?;
            sample.layout.iter().map(|b| b[c] as usize).collect()
        }
    };
    Some(rows)
}

/// Compares analytic gradients of the circle loss with central differences
/// at up to `per_tensor` sampled coordinates of every parameter tensor.
/// Embedding tables are sampled only in rows the sample actually uses.
pub fn grad_check(
    model: &Model<f64>,
    sample: &InputSample,
    gold: &LinkMatrix,
    mask: &MaskTensor,
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut grads = model.params.zeros_like();
    model.loss_and_grad(sample, gold, mask, None::<&mut ChaCha8Rng>, &mut grads)?;
    if !grads.is_finite() {
        return Err(Error::Numeric("analytic gradient is not finite".into()));
    }
    let analytic: Vec<(String, Vec<usize>, Vec<f64>)> = grads
        .entries()
        .into_iter()
        .map(|(n, s, d)| (n, s, d.to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut per = Vec::with_capacity(analytic.len());
    let mut max_rel = 0.0f64;
    let mut coordinates = 0;
    for (t, (name, shape, grad)) in analytic.iter().enumerate() {
        let candidates: Vec<usize> = match used_rows(sample, name) {
            Some(rows) => {
                let cols = shape[1];
                rows.into_iter().flat_map(|r| (r * cols)..((r + 1) * cols)).collect()
            }
            None => (0..grad.len()).collect(),
        };
        let picks: Vec<usize> = if candidates.len() <= per_tensor {
            candidates
        } else {
            rand::seq::index::sample(&mut rng, candidates.len(), per_tensor)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        };
        let mut worst = 0.0f64;
        for i in picks {
            let original = probe.params.entries()[t].2[i];
            probe.params.entries_mut()[t].2[i] = original + eps;
            let up = loss(&probe, sample, gold, mask)?;
            probe.params.entries_mut()[t].2[i] = original - eps;
            let down = loss(&probe, sample, gold, mask)?;
            probe.params.entries_mut()[t].2[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!("non-finite difference at {name}[{i}]")));
            }
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            worst = worst.max(rel);
            coordinates += 1;
        }
        max_rel = max_rel.max(worst);
        per.push((name.clone(), worst));
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        per_tensor: per,
        coordinates,
    })
}

/// A one-line document asked `date` and `org`, whose window is exactly
/// `seq_len` positions long. Both values have keys.
pub fn tiny_fixture(seq_len: usize) -> Result<(Document, InputSample, Vocab)> {
    // <s> date [T] org </s>
    const PREFIX: usize = 5;
    if seq_len < PREFIX + 4 {
        return Err(Error::Config(format!("seq_len must be at least {}, got {seq_len}", PREFIX + 4)));
    }
    let n = seq_len - PREFIX;
    let a = (n - 2) / 2;
    let mut words = vec!["Date".to_string()];
    words.extend((0..a).map(|i| format!("{}", 2000 + i)));
    words.push("Org".into());
    words.extend((a + 2..n).map(|i| format!("unit{i}")));
    let tokens = words
        .into_iter()
        .enumerate()
        .map(|(i, text)| Token {
            text,
            bbox: BBox::new(10 + 40 * i as u32, 10, 45 + 40 * i as u32, 30),
        })
        .collect();
    let entity = |role, label: Option<&str>, s, e| Entity {
        role,
        label: label.map(str::to_string),
        spans: vec![Span::new(s, e)],
    };
    let doc = Document {
        id: "fixture".into(),
        form_category: "fixture".into(),
        page_width: 1000,
        page_height: 1000,
        tokens,
        entities: vec![
            entity(Role::Key, None, 0, 1),
            entity(Role::Value, Some("date"), 1, 1 + a),
            entity(Role::Key, None, 1 + a, 2 + a),
            entity(Role::Value, Some("org"), 2 + a, n),
        ],
        kv_links: vec![KvLink { key: 0, value: 1 }, KvLink { key: 2, value: 3 }],
    };
    doc.validate()?;
    let questions = [Question::from_label("date"), Question::from_label("org")];
    let vocab = Vocab::build([&doc], ["date", "org"]);
    let mut samples = assemble_input(&questions, &doc, &vocab, 16, seq_len)?;
    Ok((doc, samples.swap_remove(0), vocab))
}
