//! Strict field extraction from parsed JSON objects.
//!
//! Every wire and file format in this crate is decoded through [`ObjectReader`]
//! so that failures name the exact field at fault and unknown keys are rejected.

use serde_json::{Map, Value};

/// A decoding failure pinned to a field path such as `bbox.width` or `points`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefix the field path with a parent name.
    pub fn nested(self, parent: &str) -> Self {
        Self {
            field: format!("{parent}.{}", self.field),
            reason: self.reason,
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

pub struct ObjectReader<'a> {
    map: &'a Map<String, Value>,
    prefix: String,
}

impl<'a> ObjectReader<'a> {
    pub fn new(value: &'a Value, prefix: &str) -> Result<Self, FieldError> {
        match value {
            Value::Object(map) => Ok(Self {
                map,
                prefix: prefix.to_string(),
            }),
            _ => Err(FieldError::new(
                if prefix.is_empty() { "<root>" } else { prefix },
                "expected an object",
            )),
        }
    }

    /// Fully-qualified name of a field of this object.
    pub fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    /// Reject any key outside `allowed`.
    pub fn deny_unknown(&self, allowed: &[&str]) -> Result<(), FieldError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(FieldError::new(self.path(k), "unknown field")),
            None => Ok(()),
        }
    }

    pub fn value(&self, name: &str) -> Result<&'a Value, FieldError> {
        self.map
            .get(name)
            .ok_or_else(|| FieldError::new(self.path(name), "missing field"))
    }

    pub fn opt_value(&self, name: &str) -> Option<&'a Value> {
        self.map.get(name).filter(|v| !v.is_null())
    }

    pub fn str(&self, name: &str) -> Result<&'a str, FieldError> {
        self.value(name)?
            .as_str()
            .ok_or_else(|| FieldError::new(self.path(name), "expected a string"))
    }

    pub fn u64(&self, name: &str) -> Result<u64, FieldError> {
        as_u64(self.value(name)?)
            .ok_or_else(|| FieldError::new(self.path(name), "expected a non-negative integer"))
    }

    pub fn i64(&self, name: &str) -> Result<i64, FieldError> {
        as_i64(self.value(name)?)
            .ok_or_else(|| FieldError::new(self.path(name), "expected an integer"))
    }

    pub fn f64(&self, name: &str) -> Result<f64, FieldError> {
        as_finite_f64(self.value(name)?)
            .ok_or_else(|| FieldError::new(self.path(name), "expected a finite number"))
    }

    pub fn array(&self, name: &str) -> Result<&'a Vec<Value>, FieldError> {
        self.value(name)?
            .as_array()
            .ok_or_else(|| FieldError::new(self.path(name), "expected an array"))
    }

    pub fn object(&self, name: &str) -> Result<ObjectReader<'a>, FieldError> {
        ObjectReader::new(self.value(name)?, &self.path(name))
    }
}

pub fn as_u64(v: &Value) -> Option<u64> {
    v.as_u64()
}

pub fn as_i64(v: &Value) -> Option<i64> {
    v.as_i64()
}

/// Integers are accepted where reals are expected; `1` and `1.0` decode alike.
pub fn as_finite_f64(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

/// Decode an array of finite reals, naming `field` on failure.
pub fn f64_array(v: &Value, field: &str) -> Result<Vec<f64>, FieldError> {
    let arr = v
        .as_array()
        .ok_or_else(|| FieldError::new(field, "expected an array"))?;
    arr.iter()
        .map(|x| as_finite_f64(x).ok_or_else(|| FieldError::new(field, "expected finite numbers")))
        .collect()
}

/// Byte offset of `"field"` as a key inside `line`, for error reporting.
pub fn key_offset(line: &str, field: &str) -> usize {
    let leaf = field.rsplit('.').next().unwrap_or(field);
    line.find(&format!("\"{leaf}\"")).unwrap_or(0)
}
