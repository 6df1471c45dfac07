use crate::error::{Error, Result};

/// A minibatch of padded token sequences, batch-major: position `t` of
/// sequence `b` sits at index `b * seq_len + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub mask: Vec<f64>,
    pub labels: Vec<usize>,
    pub batch: usize,
    pub seq_len: usize,
}

impl Batch {
    /// Builds a batch whose width is the longest unmasked prefix among the
    /// sequences. Trailing pad columns shared by every row are dropped, which
    /// leaves all outputs unchanged.
    pub fn from_sequences(seqs: &[(&[usize], &[u8])], labels: &[usize]) -> Result<Self> {
        let width = seqs
            .iter()
            .map(|(_, m)| m.iter().rposition(|&x| x != 0).map_or(0, |p| p + 1))
            .max()
            .unwrap_or(0);
        Self::with_seq_len(seqs, labels, width.max(1))
    }

    /// Builds a batch of exactly `seq_len` columns, truncating or padding with
    /// id 0 and mask 0.
    pub fn with_seq_len(
        seqs: &[(&[usize], &[u8])],
        labels: &[usize],
        seq_len: usize,
    ) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        if labels.len() != seqs.len() {
            return Err(Error::shape(
                "batch",
                format!("{} sequences, {} labels", seqs.len(), labels.len()),
            ));
        }
        let mut ids = Vec::with_capacity(seqs.len() * seq_len);
        let mut mask = Vec::with_capacity(seqs.len() * seq_len);
        for (tok, m) in seqs {
            if tok.len() != m.len() {
                return Err(Error::shape("batch", "ids and mask lengths differ"));
            }
            for t in 0..seq_len {
                ids.push(tok.get(t).copied().unwrap_or(0));
                mask.push(m.get(t).map_or(0.0, |&x| if x != 0 { 1.0 } else { 0.0 }));
            }
        }
        let b = Batch {
            ids,
            mask,
            labels: labels.to_vec(),
            batch: seqs.len(),
            seq_len,
        };
        b.validate()?;
        Ok(b)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.batch * self.seq_len;
        if self.batch == 0 || self.seq_len == 0 || self.ids.len() != n || self.mask.len() != n {
            return Err(Error::shape("batch", "inconsistent batch dimensions"));
        }
        for b in 0..self.batch {
            if self.mask[b * self.seq_len..(b + 1) * self.seq_len]
                .iter()
                .all(|&m| m == 0.0)
            {
                return Err(Error::EmptySequence { op: "batch" });
            }
        }
        Ok(())
    }

    /// Token ids reordered time-major (`t * batch + b`).
    pub(crate) fn time_major_ids(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.ids.len());
        for t in 0..self.seq_len {
            for b in 0..self.batch {
                out.push(self.ids[b * self.seq_len + t]);
            }
        }
        out
    }
}
