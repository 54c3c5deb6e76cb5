//! Flat key = value run configuration with `#` comments.

use std::path::{Path, PathBuf};

use rpbfem::geometry::{parse_charge_file, ChargeSystem, DomainBox, InterfaceGeometry, Point};
use rpbfem::{Error, Result};

#[derive(Debug, Clone)]
pub enum InterfaceSpec {
    None,
    Ball { center: Point, radius: f64 },
    VertexFile(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dimension: usize,
    pub domain_lower: Point,
    pub domain_upper: Point,
    pub interface: InterfaceSpec,
    pub charge_file: Option<PathBuf>,
    pub eps_m: f64,
    pub eps_s: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub mesh_n: usize,
    pub grid: String,
    pub residual_tol: f64,
    pub max_newton: usize,
    pub linear_tol: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub switch_constant: f64,
    pub depth: u32,
    pub max_iterations: usize,
    pub max_dofs: usize,
    pub eta_tol: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub levels: usize,
    pub refinements: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 2,
            domain_lower: [-1.0, -1.0, -1.0],
            domain_upper: [1.0, 1.0, 1.0],
            interface: InterfaceSpec::None,
            charge_file: None,
            eps_m: 2.0,
            eps_s: 80.0,
            kappa: 1.0,
            sigma: 0.1,
            mesh_n: 8,
            grid: String::from("square"),
            residual_tol: 1e-10,
            max_newton: 50,
            linear_tol: 1e-12,
            theta1: 0.5,
            theta2: 0.8,
            switch_constant: 1.0,
            depth: 3,
            max_iterations: 25,
            max_dofs: 200_000,
            eta_tol: 1e-4,
            output_dir: PathBuf::from("out"),
            seed: 0,
            levels: 4,
            refinements: 2,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(format!("invalid value for {key}: {value:?}")))
}

fn parse_point(key: &str, value: &str, dim: usize) -> Result<Point> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != dim {
        return Err(bad(format!("{key} needs {dim} coordinates, got {value:?}")));
    }
    let mut p = [0.0; 3];
    for (c, t) in p.iter_mut().zip(&parts) {
        *c = parse_num(key, t)?;
    }
    Ok(p)
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // dimension first: point-valued keys depend on it
        let entries: Vec<(usize, &str, &str)> = text
            .lines()
            .enumerate()
            .filter_map(|(i, line)| {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    return None;
                }
                Some(
                    line.split_once('=')
                        .map(|(k, v)| (i + 1, k.trim(), v.trim()))
                        .ok_or_else(|| bad(format!("line {}: expected key = value", i + 1))),
                )
            })
            .collect::<Result<_>>()?;
        for &(line, key, value) in &entries {
            if key == "dimension" {
                cfg.dimension = parse_num(key, value)?;
                if cfg.dimension != 2 && cfg.dimension != 3 {
                    return Err(bad(format!("line {line}: dimension must be 2 or 3")));
                }
                cfg.grid = if cfg.dimension == 2 { "square" } else { "cube5" }.into();
            }
        }
        let dim = cfg.dimension;
        let mut center = [0.0; 3];
        let mut radius = None;
        let mut kind: Option<String> = None;
        let mut vertex_file: Option<PathBuf> = None;
        for (line, key, value) in entries {
            let unknown = || bad(format!("line {line}: unknown key {key:?}"));
            match key {
                "dimension" => {}
                "domain_lower" => cfg.domain_lower = parse_point(key, value, dim)?,
                "domain_upper" => cfg.domain_upper = parse_point(key, value, dim)?,
                "interface" => kind = Some(value.to_string()),
                "interface_center" => center = parse_point(key, value, dim)?,
                "interface_radius" => radius = Some(parse_num(key, value)?),
                "interface_file" => vertex_file = Some(base.join(value)),
                "charge_file" => cfg.charge_file = Some(base.join(value)),
                "eps_m" => cfg.eps_m = parse_num(key, value)?,
                "eps_s" => cfg.eps_s = parse_num(key, value)?,
                "kappa" => cfg.kappa = parse_num(key, value)?,
                "sigma" => cfg.sigma = parse_num(key, value)?,
                "mesh_n" => cfg.mesh_n = parse_num(key, value)?,
                "grid" => cfg.grid = value.to_string(),
                "residual_tol" => cfg.residual_tol = parse_num(key, value)?,
                "max_newton" => cfg.max_newton = parse_num(key, value)?,
                "linear_tol" => cfg.linear_tol = parse_num(key, value)?,
                "theta1" => cfg.theta1 = parse_num(key, value)?,
                "theta2" => cfg.theta2 = parse_num(key, value)?,
                "switch_constant" => cfg.switch_constant = parse_num(key, value)?,
                "depth" => cfg.depth = parse_num(key, value)?,
                "max_iterations" => cfg.max_iterations = parse_num(key, value)?,
                "max_dofs" => cfg.max_dofs = parse_num(key, value)?,
                "eta_tol" => cfg.eta_tol = parse_num(key, value)?,
                "output_dir" => cfg.output_dir = base.join(value),
                "seed" => cfg.seed = parse_num(key, value)?,
                "levels" => cfg.levels = parse_num(key, value)?,
                "refinements" => cfg.refinements = parse_num(key, value)?,
                _ => return Err(unknown()),
            }
        }
        cfg.interface = match kind.as_deref() {
            None | Some("none") => InterfaceSpec::None,
            Some("circle") | Some("sphere") | Some("ball") => {
                let radius = radius.ok_or_else(|| bad("interface_radius missing"))?;
                if radius <= 0.0 {
                    return Err(bad("interface_radius must be positive"));
                }
                InterfaceSpec::Ball { center, radius }
            }
            Some("file") => {
                let path = vertex_file.ok_or_else(|| bad("interface_file missing"))?;
                if !path.exists() {
                    return Err(bad(format!("interface file {} not found", path.display())));
                }
                InterfaceSpec::VertexFile(path)
            }
            Some(other) => return Err(bad(format!("unknown interface kind {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_m", self.eps_m),
            ("eps_s", self.eps_s),
            ("sigma", self.sigma),
            ("residual_tol", self.residual_tol),
            ("linear_tol", self.linear_tol),
        ] {
            if !(v > 0.0) {
                return Err(bad(format!("{name} must be positive")));
            }
        }
        if self.kappa < 0.0 {
            return Err(bad("kappa must be nonnegative"));
        }
        if self.mesh_n == 0 || self.levels == 0 {
            return Err(bad("mesh_n and levels must be at least 1"));
        }
        for k in 0..self.dimension {
            if !(self.domain_lower[k] < self.domain_upper[k]) {
                return Err(bad("domain_lower must be strictly below domain_upper"));
            }
        }
        if let Some(path) = &self.charge_file {
            if !path.exists() {
                return Err(bad(format!("charge file {} not found", path.display())));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainBox> {
        DomainBox::new(self.domain_lower, self.domain_upper)
    }

    pub fn interface_geometry(&self) -> Result<Option<InterfaceGeometry>> {
        match &self.interface {
            InterfaceSpec::None => Ok(None),
            InterfaceSpec::Ball { center, radius } => Ok(Some(InterfaceGeometry::Sphere {
                center: *center,
                radius: *radius,
            })),
            InterfaceSpec::VertexFile(path) => {
                let text = std::fs::read_to_string(path)?;
                let mut vertices = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.split('#').next().unwrap_or("").trim();
                    if line.is_empty() {
                        continue;
                    }
                    vertices.push(parse_point(
                        &format!("{}:{}", path.display(), i + 1),
                        line,
                        self.dimension,
                    )?);
                }
                if vertices.len() < 3 {
                    return Err(bad("interface file needs at least 3 vertices"));
                }
                Ok(Some(InterfaceGeometry::Polyline { vertices }))
            }
        }
    }

    pub fn charges(&self) -> Result<ChargeSystem> {
        match &self.charge_file {
            None => Ok(ChargeSystem::empty(self.eps_m)),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                parse_charge_file(&text, self.dimension, self.eps_m, self.sigma)
            }
        }
    }
}
