use std::fmt::Write;

use super::ast::*;

/// Renders a policy in canonical form. Parsing the output yields a policy
/// equal to the input.
pub fn pretty_print(spec: &PolicySpec) -> String {
    let mut out = String::new();
    print_section(&mut out, "Events", &spec.events, |e| e.group, print_event);
    out.push('\n');
    print_section(&mut out, "Conditions", &spec.conditions, |c| c.tag.outer, print_condition);
    out.push('\n');
    print_section(&mut out, "Actions", &spec.actions, |a| a.tag.outer, print_action);
    out.push('\n');
    out.push_str("Rules {\n");
    for r in &spec.rules {
        out.push_str("  ");
        print_rule(&mut out, r);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// Emits a section, wrapping runs of declarations that share an outer side
/// group in a single group block.
fn print_section<T>(
    out: &mut String,
    title: &str,
    items: &[T],
    group_of: impl Fn(&T) -> Option<Side>,
    print_one: impl Fn(&mut String, &T),
) {
    out.push_str(title);
    out.push_str(" {\n");
    let mut i = 0;
    while i < items.len() {
        match group_of(&items[i]) {
            None => {
                out.push_str("  ");
                print_one(out, &items[i]);
                out.push('\n');
                i += 1;
            }
            Some(side) => {
                let _ = writeln!(out, "  {side} {{");
                while i < items.len() && group_of(&items[i]) == Some(side) {
                    out.push_str("    ");
                    print_one(out, &items[i]);
                    out.push('\n');
                    i += 1;
                }
                out.push_str("  }\n");
            }
        }
    }
    out.push_str("}\n");
}

fn params(out: &mut String, ps: &[Param]) {
    for (i, p) in ps.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{} {}", p.ty.keyword(), p.name);
    }
}

fn print_event(out: &mut String, e: &EventDecl) {
    let _ = write!(out, "{}(", e.name);
    params(out, &e.header_params);
    out.push_str(") = { ");
    if e.phase == Phase::After {
        out.push_str("after ");
    }
    out.push_str(&e.pattern.namespace);
    out.push_str(if e.pattern.receiver_wildcard { " *." } else { "." });
    let _ = write!(out, "{}(", e.pattern.method);
    match &e.pattern.args {
        ArgPattern::Any => out.push_str("..."),
        ArgPattern::Exact(ps) => params(out, ps),
    }
    out.push_str(") }");
    if let Some(b) = &e.return_binding {
        let _ = write!(out, " uponReturning({b})");
    }
    out.push(';');
}

fn print_condition(out: &mut String, c: &ConditionDecl) {
    let _ = match c.tag.inner {
        Some(side) => write!(out, "{} = {{ {side} {{ {} }} }};", c.name, c.body),
        None => write!(out, "{} = {{ {} }};", c.name, c.body),
    };
}

fn print_action(out: &mut String, a: &ActionDecl) {
    let _ = write!(out, "{} = {{ ", a.name);
    if let Some(side) = a.tag.inner {
        let _ = write!(out, "{side} {{ ");
    }
    for s in &a.body {
        let _ = write!(out, "{s}; ");
    }
    if a.tag.inner.is_some() {
        out.push_str("} ");
    }
    out.push_str("};");
}

fn formula_prec(f: &Formula<String>) -> u8 {
    match f {
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Not(_) | Formula::Atom(_) => 3,
    }
}

fn print_formula(out: &mut String, f: &Formula<String>) {
    let child = |out: &mut String, c: &Formula<String>, parens: bool| {
        if parens {
            out.push('(');
            print_formula(out, c);
            out.push(')');
        } else {
            print_formula(out, c);
        }
    };
    match f {
        Formula::Atom(a) => out.push_str(a),
        Formula::Not(inner) => {
            out.push('!');
            child(out, inner, formula_prec(inner) < 3);
        }
        Formula::And(l, r) => {
            child(out, l, formula_prec(l) < 2);
            out.push_str(" && ");
            child(out, r, formula_prec(r) <= 2);
        }
        Formula::Or(l, r) => {
            child(out, l, formula_prec(l) < 1);
            out.push_str(" || ");
            child(out, r, formula_prec(r) <= 1);
        }
    }
}

/// Renders a guard formula with minimal parentheses.
pub fn format_guard(f: &Formula<String>) -> String {
    let mut s = String::new();
    print_formula(&mut s, f);
    s
}

fn print_rule(out: &mut String, r: &RuleDecl) {
    if let Some(n) = &r.name {
        let _ = write!(out, "{n} = ");
    }
    let _ = write!(out, "{} | ", r.trigger);
    print_formula(out, &r.guard);
    let _ = write!(out, " -> {};", r.actions.join(", "));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_policy;

    #[test]
    fn groups_and_tags_survive() {
        let src = r#"
            Events { ApplicationSide { e(bool ok) = { after A.b(int x) } uponReturning(ok) } }
            Conditions {
              GlobalSide { g = { global.n > 2 } h = { GlobalSide { true } } }
              c = { ok }
            }
            Actions { a = { ApplicationSide { block() } } }
            Rules { r = e | (g || h) && !c -> a }
        "#;
        let spec = parse_policy(src).unwrap();
        let printed = pretty_print(&spec);
        assert!(
            printed.contains("GlobalSide {\n    g = { global.n > 2 };\n    h = { GlobalSide { true } };\n  }"),
            "{printed}"
        );
        assert!(printed.contains("r = e | (g || h) && !c -> a;"), "{printed}");
        assert_eq!(parse_policy(&printed).unwrap(), spec);
    }
}
