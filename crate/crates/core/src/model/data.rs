use std::io::Read;

use super::{Model, ModelError};
use crate::space::{FeatureKind, OutputSpace, Point, Schema};

/// Labelled training rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    rows: Vec<(Point, usize)>,
}

impl Dataset {
    pub fn new(rows: Vec<(Point, usize)>) -> Self {
        Self { rows }
    }

    /// Reads a CSV whose header lists every schema feature plus a final
    /// `label` column.
    pub fn from_csv<R: Read>(reader: R, schema: &Schema, output: &OutputSpace) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.last() != Some(&"label") {
            return Err(ModelError::Data("last column must be `label`".into()));
        }
        let columns: Vec<usize> = schema
            .features()
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| *n == f.name)
                    .ok_or_else(|| ModelError::Data(format!("missing column {}", f.name)))
            })
            .collect::<Result<_, _>>()?;
        if names.len() != schema.len() + 1 {
            return Err(ModelError::Data(format!(
                "expected {} columns, found {}",
                schema.len() + 1,
                names.len()
            )));
        }
        let label_col = names.len() - 1;
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let mut values = Vec::with_capacity(schema.len());
            for (f, &c) in schema.features().iter().zip(&columns) {
                let cell = &rec[c];
                let v =
                    match f.kind {
                        FeatureKind::Categorical => f.levels.iter().position(|l| l == cell).ok_or_else(|| {
                            ModelError::Data(format!("row {row}: unknown level {cell} for {}", f.name))
                        })? as f64,
                        _ => cell
                            .parse::<f64>()
                            .map_err(|e| ModelError::Data(format!("row {row}: {}: {e}", f.name)))?,
                    };
                values.push(v);
            }
            let p = Point::new(values);
            let violations = schema.check(&p);
            if let Some(v) = violations.first() {
                return Err(ModelError::Data(format!("row {row}: {v}")));
            }
            let label = output
                .index_of(&rec[label_col])
                .ok_or_else(|| ModelError::UnknownLabel(rec[label_col].to_string()))?;
            rows.push((p, label));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(Point, usize)] {
        &self.rows
    }

    pub fn points(&self) -> Vec<Point> {
        self.rows.iter().map(|(p, _)| p.clone()).collect()
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.rows[i].0
    }

    pub fn label(&self, i: usize) -> usize {
        self.rows[i].1
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, |(p, _)| p.len())
    }

    pub fn accuracy(&self, f: &Model) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let hits = self.rows.iter().filter(|(x, y)| f.predict(x) == *y).count();
        hits as f64 / self.rows.len() as f64
    }
}
