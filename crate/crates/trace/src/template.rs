//! Minimal prompt-template rendering.
//!
//! Placeholders look like `{name}`. Substitution is a single pass over
//! the template: spliced values are never re-scanned, so braces inside a
//! demonstration or a document cannot inject further placeholders.
//! Unknown placeholders are left verbatim.

/// Render `template`, replacing each `{name}` present in `vars`.
pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::render;

    #[test]
    fn replaces_known_placeholders() {
        let out = render("Title: {title}\nText: {text}", &[("title", "T"), ("text", "x")]);
        assert_eq!(out, "Title: T\nText: x");
    }

    #[test]
    fn unknown_placeholders_survive() {
        assert_eq!(render("{title} and {other}", &[("title", "T")]), "T and {other}");
    }

    #[test]
    fn spliced_values_are_not_rescanned() {
        let out = render("{demos}|{title}", &[("demos", "{title}"), ("title", "T")]);
        assert_eq!(out, "{title}|T");
    }

    #[test]
    fn stray_braces_pass_through() {
        assert_eq!(render("a { b } c {", &[]), "a { b } c {");
        assert_eq!(render("{}", &[]), "{}");
    }
}
