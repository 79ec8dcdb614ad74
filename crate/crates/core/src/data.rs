//! Columnar tables of discrete assignments used for counting.

use crate::alignment::{Corpus, FrameRecord, FrameSequence};
use crate::error::{Error, Result};
use crate::model::{measurement_name, NodeRef, PHONE};

/// Marker for an unobserved cell.
pub const MISSING: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<NodeRef>,
    cards: Vec<usize>,
    values: Vec<Vec<u16>>,
    len: usize,
}

impl Dataset {
    pub fn new(columns: Vec<(NodeRef, usize)>) -> Self {
        let (columns, cards): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        let values = vec![Vec::new(); columns.len()];
        Dataset {
            columns,
            cards,
            values,
            len: 0,
        }
    }

    /// Builds a dataset from rows of `Option<state>`.
    pub fn from_rows(columns: Vec<(NodeRef, usize)>, rows: &[Vec<Option<usize>>]) -> Result<Self> {
        let mut data = Dataset::new(columns);
        for row in rows {
            data.push(row)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, row: &[Option<usize>]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "row has {} cells, dataset has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        for (c, cell) in row.iter().enumerate() {
            if let Some(s) = *cell {
                if s >= self.cards[c] {
                    return Err(Error::StateOutOfRange {
                        variable: self.columns[c].to_string(),
                        state: s,
                        cardinality: self.cards[c],
                    });
                }
            }
        }
        for (c, cell) in row.iter().enumerate() {
            self.values[c].push(cell.map_or(MISSING, |s| s as u16));
        }
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn columns(&self) -> &[NodeRef] {
        &self.columns
    }

    pub fn column_index(&self, node: &NodeRef) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == node)
            .ok_or_else(|| Error::UnknownVariable(node.to_string()))
    }

    pub fn card(&self, column: usize) -> usize {
        self.cards[column]
    }

    pub fn column(&self, column: usize) -> &[u16] {
        &self.values[column]
    }

    pub fn get(&self, row: usize, column: usize) -> Option<usize> {
        match self.values[column][row] {
            MISSING => None,
            s => Some(s as usize),
        }
    }

    /// Appends the rows of `other`, which must have identical columns.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if self.columns != other.columns || self.cards != other.cards {
            return Err(Error::InvalidArgument("dataset columns differ".into()));
        }
        for (mine, theirs) in self.values.iter_mut().zip(&other.values) {
            mine.extend_from_slice(theirs);
        }
        self.len += other.len;
        Ok(())
    }

    /// Fails if any cell of `node` is missing.
    pub fn require_complete(&self, node: &NodeRef) -> Result<()> {
        let c = self.column_index(node)?;
        match self.values[c].iter().position(|&v| v == MISSING) {
            Some(row) => Err(Error::IncompleteData {
                variable: node.to_string(),
                row,
            }),
            None => Ok(()),
        }
    }
}

/// Variable names of the standard layout derived from a corpus header.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub aus: Vec<String>,
    pub phone_card: Option<usize>,
}

impl Layout {
    pub fn of(corpus: &Corpus) -> Self {
        Layout {
            aus: corpus.aus.clone(),
            phone_card: Some(corpus.alphabet.len()),
        }
    }

    pub fn without_phone(mut self) -> Self {
        self.phone_card = None;
        self
    }

    /// Hidden variables with their cardinalities, AUs first.
    pub fn hidden(&self) -> Vec<(String, usize)> {
        let mut out: Vec<_> = self.aus.iter().map(|a| (a.clone(), 2)).collect();
        if let Some(p) = self.phone_card {
            out.push((PHONE.to_string(), p));
        }
        out
    }

    fn current_columns(&self) -> Vec<(NodeRef, usize)> {
        let hidden = self.hidden();
        let mut cols: Vec<_> = hidden
            .iter()
            .map(|(n, c)| (NodeRef::current(n.clone()), *c))
            .collect();
        cols.extend(
            hidden
                .iter()
                .map(|(n, c)| (NodeRef::current(measurement_name(n)), *c)),
        );
        cols
    }

    fn current_cells(&self, f: &FrameRecord) -> Vec<Option<usize>> {
        let mut row: Vec<Option<usize>> = f.au_truth.iter().map(|&s| Some(s as usize)).collect();
        if self.phone_card.is_some() {
            row.push(Some(f.phone_truth));
        }
        row.extend(f.au_meas.iter().map(|m| m.map(|s| s as usize)));
        if self.phone_card.is_some() {
            row.push(f.phone_meas);
        }
        row
    }

    fn hidden_cells(&self, f: &FrameRecord) -> Vec<Option<usize>> {
        let mut row: Vec<Option<usize>> = f.au_truth.iter().map(|&s| Some(s as usize)).collect();
        if self.phone_card.is_some() {
            row.push(Some(f.phone_truth));
        }
        row
    }

    /// Every frame of every sequence as a current-slice record.
    pub fn frame_records<'a>(&self, seqs: impl IntoIterator<Item = &'a FrameSequence>) -> Result<Dataset> {
        let mut data = Dataset::new(self.current_columns());
        for seq in seqs {
            for f in &seq.frames {
                data.push(&self.current_cells(f))?;
            }
        }
        Ok(data)
    }

    /// The first frame of each sequence.
    pub fn initial_records<'a>(&self, seqs: impl IntoIterator<Item = &'a FrameSequence>) -> Result<Dataset> {
        let mut data = Dataset::new(self.current_columns());
        for seq in seqs {
            if let Some(f) = seq.frames.first() {
                data.push(&self.current_cells(f))?;
            }
        }
        Ok(data)
    }

    /// Consecutive-frame pairs: previous-slice hidden columns followed by
    /// the current-slice columns.
    pub fn transition_records<'a>(
        &self,
        seqs: impl IntoIterator<Item = &'a FrameSequence>,
    ) -> Result<Dataset> {
        let mut cols: Vec<_> = self
            .hidden()
            .into_iter()
            .map(|(n, c)| (NodeRef::previous(n), c))
            .collect();
        cols.extend(self.current_columns());
        let mut data = Dataset::new(cols);
        for seq in seqs {
            for pair in seq.frames.windows(2) {
                let mut row = self.hidden_cells(&pair[0]);
                row.extend(self.current_cells(&pair[1]));
                data.push(&row)?;
            }
        }
        Ok(data)
    }
}
