//! Canonical JSON: object keys sorted bytewise, no insignificant whitespace,
//! integers without padding. Equal values always produce equal bytes.

use serde::Serialize;
use serde_json::Value as Json;

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    to_canonical_string(value).into_bytes()
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_value(value).expect("protocol types always serialize");
    let mut out = String::new();
    write_json(&json, &mut out);
    out
}

pub fn canonical_json(json: &Json) -> String {
    let mut out = String::new();
    write_json(json, &mut out);
    out
}

fn write_json(json: &Json, out: &mut String) {
    match json {
        Json::Null | Json::Bool(_) | Json::Number(_) | Json::String(_) => {
            out.push_str(&serde_json::to_string(json).expect("scalars serialize"));
        }
        Json::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json(item, out);
            }
            out.push(']');
        }
        Json::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("keys serialize"));
                out.push(':');
                write_json(&map[k], out);
            }
            out.push('}');
        }
    }
}
