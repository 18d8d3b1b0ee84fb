use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgnet::PgNet;

const TABLE: &str = "embedding.table";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Tensors copied whole.
    pub copied: Vec<String>,
    /// Lookup-table rows copied by matching word.
    pub table_rows_copied: usize,
    pub table_rows: usize,
}

/// Copies encoder and embedding tensors from `pretrained` into `target`.
///
/// The lookup table is copied row by row for words both vocabularies share;
/// other rows keep their fresh initialization. Everything else in `target`
/// is untouched.
pub fn transfer_encoder(pretrained: &PgNet, target: &mut PgNet) -> Result<TransferReport> {
    if pretrained.config().embedding != target.config().embedding {
        return Err(Error::config(format!(
            "cannot transfer {} embeddings into a {} model",
            pretrained.config().embedding,
            target.config().embedding
        )));
    }
    let src = pretrained.params();
    let mut mismatched = Vec::new();
    for name in target.transferable_names() {
        let dst_shape = target.params().get(target.params().id(&name).expect("own tensor")).shape();
        match src.id(&name).map(|id| src.get(id).shape()) {
            None => mismatched.push(format!("{name} (missing)")),
            Some((_, c)) if name == TABLE && c == dst_shape.1 => {}
            Some(s) if s == dst_shape => {}
            Some((r, c)) => mismatched.push(format!("{name} ({r}x{c} vs {}x{})", dst_shape.0, dst_shape.1)),
        }
    }
    if !mismatched.is_empty() {
        return Err(Error::Shape(format!("cannot transfer: {}", mismatched.join(", "))));
    }

    let mut report = TransferReport {
        copied: Vec::new(),
        table_rows_copied: 0,
        table_rows: 0,
    };
    let target_vocab = target.vocab().clone();
    for name in target.transferable_names() {
        let from = src.get(src.id(&name).expect("checked"));
        let id = target.params().id(&name).expect("own tensor");
        let to = target.params_mut().get_mut(id);
        if name == TABLE {
            report.table_rows = to.rows;
            for (row, word) in (0..to.rows).map(|r| (r, target_vocab.word(r))) {
                if let Some(src_row) = pretrained.vocab().id(word) {
                    to.row_mut(row).copy_from_slice(from.row(src_row));
                    report.table_rows_copied += 1;
                }
            }
        } else {
            to.data.copy_from_slice(&from.data);
            report.copied.push(name);
        }
    }
    Ok(report)
}
