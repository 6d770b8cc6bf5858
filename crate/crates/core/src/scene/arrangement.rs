use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::object::SceneObject;
use super::SceneError;
use crate::program::MotifType;

/// A described set of posed objects; also the canonical on-disk layout format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub description: String,
    #[serde(default)]
    pub motif_type: Option<MotifType>,
    pub objects: Vec<SceneObject>,
}

impl Arrangement {
    pub fn new(description: impl Into<String>, objects: Vec<SceneObject>) -> Self {
        Arrangement {
            description: description.into(),
            motif_type: None,
            objects,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut seen = HashSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id.as_str()) {
                return Err(SceneError::InvalidArgument(format!("duplicate object id `{}`", obj.id)));
            }
            obj.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let arr: Arrangement = serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        arr.validate()?;
        Ok(arr)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("arrangement serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = fs::read_to_string(path).map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Rotation, Vec3};

    #[test]
    fn parses_canonical_document() {
        let text = r#"{
            "description": "a cup on a plate",
            "motif_type": "on_top",
            "objects": [
                {"id": "plate", "label": "plate", "half_size": [0.1, 0.01, 0.1],
                 "position": [0, 0.01, 0], "rotation": [1,0,0, 0,1,0, 0,0,1]},
                {"id": "cup", "label": "cup", "half_size": [0.04, 0.05, 0.04],
                 "position": [0, 0.07, 0], "rotation": [1,0,0, 0,1,0, 0,0,1]}
            ]
        }"#;
        let arr = Arrangement::from_json(text).unwrap();
        assert_eq!(arr.objects.len(), 2);
        assert_eq!(arr.objects[1].position, Vec3::new(0.0, 0.07, 0.0));
        assert_eq!(arr.motif_type.unwrap().to_string(), "on_top");
        assert_eq!(Arrangement::from_json(&arr.to_json()).unwrap(), arr);
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_rotations() {
        let obj = SceneObject::new("a", "box", Vec3::splat(0.1));
        let dup = Arrangement::new("x", vec![obj.clone(), obj.clone()]);
        assert!(dup.validate().is_err());

        let mut skew = obj;
        skew.rotation = Rotation::from_row_major([1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(Arrangement::new("x", vec![skew]).validate().is_err());
    }
}
