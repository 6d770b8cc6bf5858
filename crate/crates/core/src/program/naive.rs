use std::fmt::Write;

use super::{ProgramError, ProgramText, Provenance};
use crate::scene::{Arrangement, Axis};

/// Render a number the way generated programs print it: rounded to five
/// decimals, trailing zeros dropped, at least one fractional digit kept.
///
/// `0.0143` stays `0.0143`, `0` becomes `0.0`, and tiny negatives become `-0.0`.
pub fn format_number(v: f64) -> String {
    let mut s = format!("{v:.5}");
    if s.contains('.') {
        while s.ends_with('0') && !s.ends_with(".0") {
            s.pop();
        }
    }
    s
}

fn format_list(v: [f64; 3]) -> String {
    format!(
        "[{}, {}, {}]",
        format_number(v[0]),
        format_number(v[1]),
        format_number(v[2])
    )
}

/// Angles whose rendered value is zero are skipped.
fn rotate_calls(var: &str, angles: (f64, f64, f64)) -> Vec<String> {
    let (a, b, c) = angles;
    [(Axis::Z, a), (Axis::Y, b), (Axis::X, c)]
        .into_iter()
        .filter_map(|(axis, deg)| {
            let text = format_number(deg);
            let is_zero = text.trim_start_matches('-').chars().all(|ch| ch == '0' || ch == '.');
            (!is_zero).then(|| format!("rotate({var}, '{}', {text})", axis.as_str()))
        })
        .collect()
}

/// Extract the flat, statement-per-object program that recreates `arrangement`.
///
/// Objects are emitted in input order. Non-identity rotations are decomposed
/// into intrinsic z-y-x local-axis `rotate` calls.
pub fn extract_naive_program(arrangement: &Arrangement) -> Result<ProgramText, ProgramError> {
    if arrangement.objects.is_empty() {
        return Err(ProgramError::InvalidArgument("arrangement has no objects".into()));
    }
    for obj in &arrangement.objects {
        if !(obj.position.is_finite() && obj.half_size.is_finite()) {
            return Err(ProgramError::InvalidArgument(format!(
                "object `{}` has a non-finite pose",
                obj.id
            )));
        }
    }

    let mut src = String::new();
    let _ = writeln!(src, "# Description: {}", arrangement.description);
    src.push_str("# Naive program extracted from input arrangement\n");
    src.push_str("objs = []\n");
    for (i, obj) in arrangement.objects.iter().enumerate() {
        let var = format!("obj_{}", i + 1);
        let _ = writeln!(src, "{var}_half_size = {}", format_list(obj.half_size.to_array()));
        let _ = writeln!(src, "{var}_centroid = {}", format_list(obj.position.to_array()));
        let _ = writeln!(src, "{var} = create({}, {var}_half_size)", python_string(&obj.label));
        let _ = writeln!(
            src,
            "move({var}, {var}_centroid[0], {var}_centroid[1], {var}_centroid[2])"
        );
        if !obj.rotation.is_identity(1e-12) {
            for call in rotate_calls(&var, obj.rotation.to_euler_zyx_deg()) {
                let _ = writeln!(src, "{call}");
            }
        }
        let _ = writeln!(src, "objs.append({var})");
    }

    Ok(ProgramText {
        source: src,
        motif_type: arrangement.motif_type,
        description: arrangement.description.clone(),
        provenance: Provenance::Naive,
        created_from: None,
    })
}

/// Single-quoted Python string literal.
pub fn python_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{apply_rotate, SceneObject, Vec3};

    #[test]
    fn number_rendering() {
        assert_eq!(format_number(0.08909), "0.08909");
        assert_eq!(format_number(0.0143), "0.0143");
        assert_eq!(format_number(-0.00757), "-0.00757");
        assert_eq!(format_number(0.0), "0.0");
        assert_eq!(format_number(-2e-7), "-0.0");
        assert_eq!(format_number(90.0), "90.0");
        assert_eq!(format_number(1.234567), "1.23457");
    }

    #[test]
    fn single_object_has_no_rotate() {
        let arr = Arrangement::new("a box", vec![SceneObject::new("b", "box", Vec3::splat(0.5))]);
        let p = extract_naive_program(&arr).unwrap();
        assert_eq!(p.source.matches("create(").count(), 1);
        assert_eq!(p.source.matches("move(").count(), 1);
        assert!(!p.source.contains("rotate("));
        assert_eq!(p.provenance, Provenance::Naive);
    }

    #[test]
    fn rotated_object_emits_local_axis_rotation() {
        let obj = apply_rotate(&SceneObject::new("c", "chair", Vec3::new(0.3, 0.5, 0.2)), Axis::Y, 90.0);
        let p = extract_naive_program(&Arrangement::new("a chair", vec![obj])).unwrap();
        assert!(p.source.contains("rotate(obj_1, 'y', 90.0)"), "{}", p.source);
        assert!(!p.source.contains("'x'") && !p.source.contains("'z'"));
    }

    #[test]
    fn empty_arrangement_rejected() {
        assert!(extract_naive_program(&Arrangement::new("nothing", vec![])).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        assert_eq!(python_string("kid's cup"), "'kid\\'s cup'");
    }
}
