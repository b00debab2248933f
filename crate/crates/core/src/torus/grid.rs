use std::io::{BufRead, Read, Write};

use crate::error::{invalid, shape, Error, Result};
use crate::torus::TorusGeometry;

/// Real-valued field sampled at the nodes of a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGridField {
    geometry: TorusGeometry,
    values: Vec<f64>,
}

/// Nonnegative density on a torus grid with its cached total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    geometry: TorusGeometry,
    values: Vec<f64>,
    mass: f64,
}

fn check_len(geometry: &TorusGeometry, len: usize) -> Result<()> {
    if len != geometry.len() {
        return Err(shape(format!("expected {} values, got {len}", geometry.len())));
    }
    Ok(())
}

impl SignedGridField {
    pub fn new(geometry: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        check_len(&geometry, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at cell {i}")));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: TorusGeometry) -> Self {
        Self { geometry, values: vec![0.0; geometry.len()] }
    }

    pub fn constant(geometry: TorusGeometry, c: f64) -> Self {
        Self { geometry, values: vec![c; geometry.len()] }
    }

    /// Sample `f` at every grid node.
    pub fn from_fn(geometry: TorusGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(&geometry.node(i))).collect();
        Self::new(geometry, values)
    }

    pub(crate) fn from_raw(geometry: TorusGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cell-sum quadrature of the field.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geometry.cell_volume()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SignedGridField, b: f64) -> Result<Self> {
        if self.geometry != other.geometry {
            return Err(shape("fields live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { geometry: self.geometry, values })
    }

    /// Weighted sum `Σ self·other·Δ`.
    pub fn inner(&self, other: &SignedGridField) -> Result<f64> {
        if self.geometry != other.geometry {
            return Err(shape("fields live on different grids"));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum();
        Ok(s * self.geometry.cell_volume())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.geometry, &self.values)
    }

    pub fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let (g, v) = read_csv(r)?;
        Self::new(g, v)
    }

    pub fn to_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(w, &self.geometry, &self.values, KIND_SIGNED)
    }

    pub fn from_binary<R: Read>(r: R) -> Result<Self> {
        let (g, v, _) = read_binary(r)?;
        Self::new(g, v)
    }
}

impl GridMeasure {
    pub fn new(geometry: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        check_len(&geometry, values.len())?;
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!(
                "density must be finite and nonnegative, cell {i} holds {}",
                values[i]
            )));
        }
        let mass = values.iter().sum::<f64>() * geometry.cell_volume();
        Ok(Self { geometry, values, mass })
    }

    /// Uniform probability density `1 / T^d`.
    pub fn uniform(geometry: TorusGeometry) -> Self {
        let v = 1.0 / geometry.volume();
        Self::new(geometry, vec![v; geometry.len()]).expect("uniform density is valid")
    }

    pub fn from_fn(geometry: TorusGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(&geometry.node(i))).collect();
        Self::new(geometry, values)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Rescale to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(invalid("cannot normalize a measure of zero mass"));
        }
        let values = self.values.iter().map(|v| v / self.mass).collect();
        Self::new(self.geometry, values)
    }

    /// Mass of every cell, `value · cell_volume`.
    pub fn cell_masses(&self) -> Vec<f64> {
        let dv = self.geometry.cell_volume();
        self.values.iter().map(|v| v * dv).collect()
    }

    pub fn as_signed(&self) -> SignedGridField {
        SignedGridField::from_raw(self.geometry, self.values.clone())
    }

    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.geometry, &self.values)
    }

    pub fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let (g, v) = read_csv(r)?;
        Self::new(g, v)
    }

    pub fn to_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(w, &self.geometry, &self.values, KIND_MEASURE)
    }

    pub fn from_binary<R: Read>(r: R) -> Result<Self> {
        let (g, v, _) = read_binary(r)?;
        Self::new(g, v)
    }
}

impl TryFrom<SignedGridField> for GridMeasure {
    type Error = Error;
    fn try_from(f: SignedGridField) -> Result<Self> {
        GridMeasure::new(f.geometry, f.values)
    }
}

const CSV_HEADER: &str = "dim,side,resolution";

fn write_csv<W: Write>(mut w: W, g: &TorusGeometry, values: &[f64]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    writeln!(w, "{},{:?},{}", g.dim(), g.side(), g.resolution())?;
    writeln!(w, "value")?;
    for v in values {
        writeln!(w, "{v:?}")?;
    }
    Ok(())
}

fn read_csv<R: BufRead>(r: R) -> Result<(TorusGeometry, Vec<f64>)> {
    let fmt = |m: &str| Error::Format(m.to_string());
    let mut lines = r.lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
    if next()?.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(fmt("missing grid header"));
    }
    let meta = next()?.ok_or_else(|| fmt("missing grid metadata"))?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(fmt("metadata must have three fields"));
    }
    let dim = parts[0].parse().map_err(|_| fmt("bad dim"))?;
    let side = parts[1].parse().map_err(|_| fmt("bad side"))?;
    let res = parts[2].parse().map_err(|_| fmt("bad resolution"))?;
    let g = TorusGeometry::new(dim, side, res)?;
    if next()?.as_deref().map(str::trim) != Some("value") {
        return Err(fmt("missing value column header"));
    }
    let mut values = Vec::with_capacity(g.len());
    while let Some(line) = next()? {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse().map_err(|_| fmt("bad value"))?);
    }
    Ok((g, values))
}

const MAGIC: &[u8; 8] = b"HGASGRD1";
const KIND_MEASURE: u8 = 1;
const KIND_SIGNED: u8 = 2;

// header: magic (8) | dim u32 | resolution u32 | side f64 | kind u8 | 7 reserved
fn write_binary<W: Write>(mut w: W, g: &TorusGeometry, values: &[f64], kind: u8) -> Result<()> {
    let mut header = [0u8; 32];
    header[..8].copy_from_slice(MAGIC);
    header[8..12].copy_from_slice(&(g.dim() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(g.resolution() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&g.side().to_le_bytes());
    header[24] = kind;
    w.write_all(&header)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_binary<R: Read>(mut r: R) -> Result<(TorusGeometry, Vec<f64>, u8)> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let res = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let side = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let g = TorusGeometry::new(dim, side, res)?;
    let mut buf = vec![0u8; 8 * g.len()];
    r.read_exact(&mut buf)?;
    let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((g, values, header[24]))
}
