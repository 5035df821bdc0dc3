use std::io::{self, Write};

use super::{LinearProgram, Sense, VarId};

fn clean(name: &str, fallback: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    match s.chars().next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => s,
        Some(_) => format!("{fallback}{s}"),
        None => fallback.to_string(),
    }
}

fn term(out: &mut String, first: &mut bool, coef: f64, name: &str) {
    if *first {
        out.push_str(&format!(" {coef} {name}"));
        *first = false;
    } else if coef < 0.0 {
        out.push_str(&format!(" - {} {name}", -coef));
    } else {
        out.push_str(&format!(" + {coef} {name}"));
    }
}

pub(super) fn write<W: Write>(lp: &LinearProgram, binaries: &[VarId], w: &mut W) -> io::Result<()> {
    let names: Vec<String> = lp
        .vars()
        .iter()
        .enumerate()
        .map(|(k, v)| format!("{}_{k}", clean(&v.name, "v")))
        .collect();

    writeln!(w, "Minimize")?;
    let mut obj = String::from(" obj:");
    let mut first = true;
    for (k, v) in lp.vars().iter().enumerate() {
        if v.cost != 0.0 {
            term(&mut obj, &mut first, v.cost, &names[k]);
        }
    }
    if first {
        obj.push_str(" 0");
    }
    writeln!(w, "{obj}")?;

    writeln!(w, "Subject To")?;
    for (r, row) in lp.rows().iter().enumerate() {
        let mut line = format!(" {}_{r}:", clean(&row.name, "r"));
        let mut first = true;
        for &(v, a) in &row.coeffs {
            term(&mut line, &mut first, a, &names[v.0]);
        }
        if first {
            line.push_str(" 0 ");
            line.push_str(&names.first().cloned().unwrap_or_else(|| "x".into()));
        }
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(w, "{line} {op} {}", row.rhs)?;
    }

    writeln!(w, "Bounds")?;
    for (k, v) in lp.vars().iter().enumerate() {
        let name = &names[k];
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => writeln!(w, " {name} = {}", v.lower)?,
            (true, true) => writeln!(w, " {} <= {name} <= {}", v.lower, v.upper)?,
            (true, false) if v.lower == 0.0 => {}
            (true, false) => writeln!(w, " {name} >= {}", v.lower)?,
            (false, true) => writeln!(w, " -inf <= {name} <= {}", v.upper)?,
            (false, false) => writeln!(w, " {name} free")?,
        }
    }
    if !binaries.is_empty() {
        writeln!(w, "Binaries")?;
        for v in binaries {
            writeln!(w, " {}", names[v.0])?;
        }
    }
    writeln!(w, "End")
}

#[cfg(test)]
mod tests {
    use crate::lp::{LinearProgram, Sense};

    #[test]
    fn writes_all_sections() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("p(A#1)", f64::NEG_INFINITY, f64::INFINITY, -2.0);
        lp.add_row("cap", vec![(x, 1.0), (y, -1.0)], Sense::Le, 4.0);
        let mut buf = Vec::new();
        lp.write_lp_with_binaries(&[x], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Minimize\n obj: 1 x_0 - 2 p_A_1__1\n"));
        assert!(text.contains("Subject To\n cap_0: 1 x_0 - 1 p_A_1__1 <= 4\n"));
        assert!(text.contains(" p_A_1__1 free\n"));
        assert!(text.contains("Binaries\n x_0\n"));
        assert!(text.ends_with("End\n"));
    }
}
