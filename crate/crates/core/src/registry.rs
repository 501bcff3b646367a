//! Port registry: identity, coordinates and capacity for every port.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::csv_reader;

fn default_capacity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub port_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default = "default_capacity")]
    pub capacity: f64,
}

impl Port {
    pub fn validate(&self) -> Result<()> {
        if self.port_id.is_empty() || self.port_id.contains(|c: char| c.is_whitespace() || c == ',') {
            return Err(Error::Domain(format!("invalid port_id {:?}", self.port_id)));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Domain(format!(
                "port {}: latitude {} outside [-90, 90]",
                self.port_id, self.latitude
            )));
        }
        if !(-180.0..180.0).contains(&self.longitude) {
            return Err(Error::Domain(format!(
                "port {}: longitude {} outside [-180, 180)",
                self.port_id, self.longitude
            )));
        }
        if !self.capacity.is_finite() || self.capacity < 0.0 {
            return Err(Error::Domain(format!(
                "port {}: capacity {} must be nonnegative",
                self.port_id, self.capacity
            )));
        }
        Ok(())
    }
}

/// Ports sorted by `port_id`. The sorted order is the canonical matrix order
/// used by every downstream stage.
#[derive(Debug, Clone, Default)]
pub struct PortRegistry {
    ports: Vec<Port>,
    index: HashMap<String, usize>,
}

impl PortRegistry {
    pub fn new(mut ports: Vec<Port>) -> Result<Self> {
        for p in &ports {
            p.validate()?;
        }
        ports.sort_by(|a, b| a.port_id.cmp(&b.port_id));
        let mut index = HashMap::with_capacity(ports.len());
        for (i, p) in ports.iter().enumerate() {
            if index.insert(p.port_id.clone(), i).is_some() {
                return Err(Error::DataIntegrity(format!("duplicate port_id {}", p.port_id)));
            }
        }
        Ok(Self { ports, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(path)?;
        let mut ports = Vec::new();
        for (row, rec) in rdr.deserialize::<Port>().enumerate() {
            let port = rec?;
            port.validate().map_err(|e| e.at(path, row as u64 + 2))?;
            ports.push(port);
        }
        if ports.is_empty() {
            return Err(Error::EmptyDataset("port registry"));
        }
        Self::new(ports)
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn ids(&self) -> Vec<String> {
        self.ports.iter().map(|p| p.port_id.clone()).collect()
    }

    pub fn index_of(&self, port_id: &str) -> Result<usize> {
        self.index
            .get(port_id)
            .copied()
            .ok_or_else(|| Error::Registry(port_id.to_string()))
    }

    pub fn get(&self, port_id: &str) -> Option<&Port> {
        self.index.get(port_id).map(|&i| &self.ports[i])
    }
}
