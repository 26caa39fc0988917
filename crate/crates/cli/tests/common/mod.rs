//! Shared helpers for the CLI test suites: quadrature oracles, a strict
//! XML well-formedness checker for the SVG output, and binary invocation.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Run the `mtlab` binary with arguments in a working directory.
pub fn mtlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 60)
}

/// Quadrature over equal segments so narrow peaks cannot be stepped over.
pub fn integrate_peaked(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    segments: usize,
    tol: f64,
) -> f64 {
    let width = (hi - lo) / segments as f64;
    let mut total = 0.0;
    for i in 0..segments {
        let a = lo + i as f64 * width;
        let b = if i + 1 == segments { hi } else { a + width };
        total += adaptive_simpson(f, a, b, tol);
    }
    total
}

pub fn normal_density(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

// ---------------------------------------------------------------------------
// XML well-formedness
// ---------------------------------------------------------------------------

/// Strict well-formedness check sufficient for SVG 1.1 output: balanced,
/// properly nested tags, quoted attributes, one root element, and only
/// declared character entities in text.
pub fn assert_well_formed_xml(text: &str) {
    let mut rest = text.trim_start();
    if let Some(after) = rest.strip_prefix("<?xml") {
        let end = after.find("?>").expect("unterminated XML declaration");
        rest = after[end + 2..].trim_start();
    }
    let mut stack: Vec<String> = Vec::new();
    let mut roots = 0usize;
    let mut chars = rest.char_indices().peekable();
    let bytes = rest;

    while let Some((i, c)) = chars.next() {
        if c == '<' {
            let close = bytes[i..].find('>').map(|o| i + o).expect("unterminated tag");
            let inner = &bytes[i + 1..close];
            assert!(!inner.is_empty(), "empty tag at byte {i}");
            if let Some(name) = inner.strip_prefix('/') {
                let name = name.trim();
                let open = stack.pop().unwrap_or_else(|| panic!("stray closing tag </{name}>"));
                assert_eq!(open, name, "mismatched closing tag </{name}> for <{open}>");
            } else {
                let self_closing = inner.ends_with('/');
                let body = if self_closing { &inner[..inner.len() - 1] } else { inner };
                let name = body.split_whitespace().next().expect("tag without a name");
                assert!(
                    name.chars().all(|c| c.is_ascii_alphanumeric() || c == ':' || c == '-'),
                    "bad tag name '{name}'"
                );
                check_attributes(body, name);
                if stack.is_empty() {
                    roots += 1;
                }
                if !self_closing {
                    stack.push(name.to_string());
                }
            }
            while let Some(&(j, _)) = chars.peek() {
                if j > close {
                    break;
                }
                chars.next();
            }
        } else if c == '&' {
            let tail = &bytes[i..];
            let ok = ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"]
                .iter()
                .any(|e| tail.starts_with(e));
            assert!(ok, "undeclared entity at byte {i}");
        } else {
            assert!(c != '>', "stray '>' in text at byte {i}");
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    assert_eq!(roots, 1, "document must have exactly one root element");
}

fn check_attributes(body: &str, name: &str) {
    let attrs = &body[name.len()..];
    let mut rest = attrs.trim_start();
    while !rest.is_empty() {
        let eq = rest.find('=').unwrap_or_else(|| panic!("attribute without '=' in <{name}>: '{rest}'"));
        let attr_name = rest[..eq].trim();
        assert!(!attr_name.is_empty(), "empty attribute name in <{name}>");
        let after = rest[eq + 1..].trim_start();
        assert!(
            after.starts_with('"'),
            "unquoted attribute value in <{name}>: '{after}'"
        );
        let close = after[1..]
            .find('"')
            .unwrap_or_else(|| panic!("unterminated attribute value in <{name}>"));
        rest = after[close + 2..].trim_start();
    }
}
