use std::fs;
use std::path::Path;

use super::ProblemInstance;
use crate::error::{Error, Result};

impl ProblemInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instances always serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_linear_regression, gen_matrix_completion, gen_phase_retrieval};

    #[test]
    fn json_round_trip_is_lossless() {
        for inst in [
            gen_phase_retrieval(7, 25, 1).unwrap(),
            gen_matrix_completion(30, 40, 2, 3, 1).unwrap(),
            gen_linear_regression(3, 20, 0.3, 1).unwrap(),
        ] {
            let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
            assert_eq!(back, inst);
            assert_eq!(back.to_json(), inst.to_json());
        }
    }

    #[test]
    fn load_reports_the_path() {
        let err = ProblemInstance::load("/nonexistent/instance.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/instance.json"));
    }
}
