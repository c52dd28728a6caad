//! Parser and emitter for the policy and request documents.
//!
//! Policy subset (element names follow XACML 2.0; namespaces are ignored
//! when parsing):
//!
//! ```text
//! Policy[@PolicyId, @RuleCombiningAlgId=first-applicable?]
//!   Description         "kind=window alpha=A beta=B" | "kind=trigger op=OP theta=T"
//!   Target/Resources/Resource/ResourceMatch[@MatchId=string-equal]
//!     AttributeValue    stream id
//!     ResourceAttributeDesignator[@AttributeId=resource-id]
//!   Rule[@Effect=Permit]/Condition[@FunctionId=integer-<cmp>]
//!     Apply[@FunctionId=integer-one-and-only]/SubjectAttributeDesignator[@AttributeId=k]
//!     AttributeValue    threshold
//! ```
//!
//! Request subset:
//!
//! ```text
//! Request
//!   Subject/Attribute[@AttributeId=k]/AttributeValue
//!   Resource/Attribute[@AttributeId=resource-id]/AttributeValue
//!   Action?             empty
//! ```

use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{PolicyError, XacmlPolicy, XacmlRequest};
use crate::abe::{AccessPolicy, CompareOp};

const POLICY_NS: &str = "urn:oasis:names:tc:xacml:2.0:policy:schema:os";
const CONTEXT_NS: &str = "urn:oasis:names:tc:xacml:2.0:context:schema:os";
const FIRST_APPLICABLE: &str = "urn:oasis:names:tc:xacml:1.0:rule-combining-algorithm:first-applicable";
const FN_PREFIX: &str = "urn:oasis:names:tc:xacml:1.0:function:";
const RESOURCE_ID: &str = "urn:oasis:names:tc:xacml:1.0:resource:resource-id";
const SUBJECT_K: &str = "k";
const XS_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const XS_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";

fn function_name(op: CompareOp) -> &'static str {
    match op {
        CompareOp::Eq => "integer-equal",
        CompareOp::Ge => "integer-greater-than-or-equal",
        CompareOp::Gt => "integer-greater-than",
        CompareOp::Le => "integer-less-than-or-equal",
        CompareOp::Lt => "integer-less-than",
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn describe(p: &AccessPolicy) -> String {
    match p {
        AccessPolicy::Window { alpha, beta } => format!("kind=window alpha={alpha} beta={beta}"),
        AccessPolicy::Trigger { theta, op } => format!("kind=trigger op={op} theta={theta}"),
    }
}

pub fn emit_policy(p: &XacmlPolicy) -> String {
    let id = escape(&p.id);
    let (op, theta) = p.condition();
    let mut s = String::new();
    // Writing to a String cannot fail.
    let _ = write!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<Policy xmlns="{POLICY_NS}" PolicyId="{id}" RuleCombiningAlgId="{FIRST_APPLICABLE}">
  <Description>{desc}</Description>
  <Target>
    <Resources>
      <Resource>
        <ResourceMatch MatchId="{FN_PREFIX}string-equal">
          <AttributeValue DataType="{XS_STRING}">{stream}</AttributeValue>
          <ResourceAttributeDesignator AttributeId="{RESOURCE_ID}" DataType="{XS_STRING}"/>
        </ResourceMatch>
      </Resource>
    </Resources>
  </Target>
  <Rule RuleId="{id}:rule" Effect="Permit">
    <Condition FunctionId="{FN_PREFIX}{func}">
      <Apply FunctionId="{FN_PREFIX}integer-one-and-only">
        <SubjectAttributeDesignator AttributeId="{SUBJECT_K}" DataType="{XS_INTEGER}"/>
      </Apply>
      <AttributeValue DataType="{XS_INTEGER}">{theta}</AttributeValue>
    </Condition>
  </Rule>
</Policy>
"#,
        desc = describe(&p.policy),
        stream = escape(&p.stream),
        func = function_name(op),
    );
    s
}

pub fn emit_request(stream: &str, k: u64) -> String {
    format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<Request xmlns="{CONTEXT_NS}">
  <Subject>
    <Attribute AttributeId="{SUBJECT_K}" DataType="{XS_INTEGER}">
      <AttributeValue>{k}</AttributeValue>
    </Attribute>
  </Subject>
  <Resource>
    <Attribute AttributeId="{RESOURCE_ID}" DataType="{XS_STRING}">
      <AttributeValue>{stream}</AttributeValue>
    </Attribute>
  </Resource>
  <Action/>
</Request>
"#,
        stream = escape(stream),
    )
}

struct Ctx<'d, 'i> {
    doc: &'d Document<'i>,
}

impl<'d, 'i> Ctx<'d, 'i> {
    fn err(&self, node: Node<'_, '_>, reason: impl Into<String>) -> PolicyError {
        let pos = self.doc.text_pos_at(node.range().start);
        PolicyError::Parse { line: pos.row, col: pos.col, reason: reason.into() }
    }

    fn expect_name(&self, node: Node<'_, '_>, name: &str) -> Result<(), PolicyError> {
        if node.tag_name().name() != name {
            return Err(self.err(node, format!("expected <{name}>, found <{}>", node.tag_name().name())));
        }
        Ok(())
    }

    /// Element children, rejecting stray non-whitespace text.
    fn elements<'a>(&self, node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>, PolicyError> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_element() {
                out.push(c);
            } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
                return Err(self.err(c, format!("unexpected text inside <{}>", node.tag_name().name())));
            }
        }
        Ok(out)
    }

    /// The single element child, which must be named `name`.
    fn only_child<'a>(&self, node: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>, PolicyError> {
        let kids = self.elements(node)?;
        match kids.as_slice() {
            [c] => {
                self.expect_name(*c, name)?;
                Ok(*c)
            }
            [] => Err(self.err(node, format!("missing <{name}>"))),
            [_, extra, ..] => Err(self.err(*extra, format!("unexpected <{}>", extra.tag_name().name()))),
        }
    }

    fn attr<'a>(&self, node: Node<'a, 'i>, name: &str) -> Result<&'a str, PolicyError> {
        node.attribute(name)
            .ok_or_else(|| self.err(node, format!("<{}> lacks attribute {name}", node.tag_name().name())))
    }

    fn expect_attr(&self, node: Node<'_, '_>, name: &str, want: &str) -> Result<(), PolicyError> {
        let got = self.attr(node, name)?;
        if got != want {
            return Err(self.err(node, format!("unsupported {name} {got:?}")));
        }
        Ok(())
    }

    /// Text content of a leaf element.
    fn text<'a>(&self, node: Node<'a, 'i>) -> Result<&'a str, PolicyError> {
        if let Some(c) = node.children().find(|c| c.is_element()) {
            return Err(self.err(c, format!("unexpected <{}>", c.tag_name().name())));
        }
        Ok(node.text().unwrap_or(""))
    }

    fn integer(&self, node: Node<'_, '_>) -> Result<u64, PolicyError> {
        let t = self.text(node)?.trim();
        t.parse().map_err(|_| self.err(node, format!("{t:?} is not a 64-bit unsigned integer")))
    }
}

fn parse_doc(xml: &str) -> Result<Document<'_>, PolicyError> {
    Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        PolicyError::Parse { line: pos.row, col: pos.col, reason: e.to_string() }
    })
}

fn parse_op(cx: &Ctx<'_, '_>, node: Node<'_, '_>, func: &str) -> Result<CompareOp, PolicyError> {
    let name = func
        .strip_prefix(FN_PREFIX)
        .ok_or_else(|| cx.err(node, format!("unsupported comparison function {func:?}")))?;
    CompareOp::ALL
        .into_iter()
        .find(|&op| function_name(op) == name)
        .ok_or_else(|| cx.err(node, format!("unsupported comparison function {func:?}")))
}

fn parse_description(cx: &Ctx<'_, '_>, node: Node<'_, '_>) -> Result<AccessPolicy, PolicyError> {
    let text = cx.text(node)?;
    let mut kind = None;
    let mut fields = std::collections::BTreeMap::new();
    for part in text.split_whitespace() {
        let (key, value) =
            part.split_once('=').ok_or_else(|| cx.err(node, format!("metadata entry {part:?} is not key=value")))?;
        if key == "kind" {
            kind = Some(value);
        } else if fields.insert(key, value).is_some() {
            return Err(cx.err(node, format!("metadata key {key:?} repeated")));
        }
    }
    let field = |name: &str| fields.get(name).copied().ok_or_else(|| cx.err(node, format!("metadata lacks {name}")));
    let number = |name: &str| -> Result<u64, PolicyError> {
        let v = field(name)?;
        v.parse().map_err(|_| cx.err(node, format!("metadata {name}={v:?} is not an integer")))
    };
    let (policy, expected) = match kind {
        Some("window") => {
            let beta = u32::try_from(number("beta")?).map_err(|_| cx.err(node, "beta exceeds 32 bits"))?;
            (AccessPolicy::Window { alpha: number("alpha")?, beta }, ["alpha", "beta"])
        }
        Some("trigger") => {
            let op: CompareOp =
                field("op")?.parse().map_err(|_| cx.err(node, "metadata op must be one of eq, ge, gt, le, lt"))?;
            (AccessPolicy::Trigger { op, theta: number("theta")? }, ["op", "theta"])
        }
        Some(other) => return Err(cx.err(node, format!("unknown policy kind {other:?}"))),
        None => return Err(cx.err(node, "metadata lacks kind")),
    };
    if let Some(extra) = fields.keys().find(|k| !expected.contains(k)) {
        return Err(cx.err(node, format!("unknown metadata key {extra:?}")));
    }
    policy.validate().map_err(|e| cx.err(node, format!("invalid policy parameters: {e}")))?;
    Ok(policy)
}

fn parse_target(cx: &Ctx<'_, '_>, target: Node<'_, '_>) -> Result<String, PolicyError> {
    let resources = cx.only_child(target, "Resources")?;
    let resource = cx.only_child(resources, "Resource")?;
    let m = cx.only_child(resource, "ResourceMatch")?;
    cx.expect_attr(m, "MatchId", &format!("{FN_PREFIX}string-equal"))?;
    let kids = cx.elements(m)?;
    let mut stream = None;
    let mut designator = false;
    for k in &kids {
        match k.tag_name().name() {
            "AttributeValue" if stream.is_none() => stream = Some(cx.text(*k)?.to_string()),
            "ResourceAttributeDesignator" if !designator => {
                cx.expect_attr(*k, "AttributeId", RESOURCE_ID)?;
                cx.text(*k)?;
                designator = true;
            }
            other => return Err(cx.err(*k, format!("unexpected <{other}>"))),
        }
    }
    if !designator {
        return Err(cx.err(m, "missing <ResourceAttributeDesignator>"));
    }
    stream.ok_or_else(|| cx.err(m, "missing <AttributeValue>"))
}

fn parse_rule(cx: &Ctx<'_, '_>, rule: Node<'_, '_>) -> Result<(CompareOp, u64), PolicyError> {
    cx.expect_attr(rule, "Effect", "Permit")?;
    let cond = cx.only_child(rule, "Condition")?;
    let op = parse_op(cx, cond, cx.attr(cond, "FunctionId")?)?;
    let kids = cx.elements(cond)?;
    let [apply, value] = kids.as_slice() else {
        return Err(cx.err(cond, "<Condition> must hold <Apply> and <AttributeValue>"));
    };
    cx.expect_name(*apply, "Apply")?;
    cx.expect_attr(*apply, "FunctionId", &format!("{FN_PREFIX}integer-one-and-only"))?;
    let subject = cx.only_child(*apply, "SubjectAttributeDesignator")?;
    cx.expect_attr(subject, "AttributeId", SUBJECT_K)?;
    cx.text(subject)?;
    cx.expect_name(*value, "AttributeValue")?;
    Ok((op, cx.integer(*value)?))
}

pub fn parse_policy(xml: &str) -> Result<XacmlPolicy, PolicyError> {
    let doc = parse_doc(xml)?;
    let cx = Ctx { doc: &doc };
    let root = doc.root_element();
    cx.expect_name(root, "Policy")?;
    let id = cx.attr(root, "PolicyId")?;
    if id.is_empty() {
        return Err(cx.err(root, "empty PolicyId"));
    }
    if let Some(alg) = root.attribute("RuleCombiningAlgId") {
        if alg != FIRST_APPLICABLE {
            return Err(cx.err(root, format!("unsupported RuleCombiningAlgId {alg:?}")));
        }
    }
    let mut description = None;
    let mut target = None;
    let mut rule = None;
    for child in cx.elements(root)? {
        let slot = match child.tag_name().name() {
            "Description" => &mut description,
            "Target" => &mut target,
            "Rule" => &mut rule,
            other => return Err(cx.err(child, format!("element <{other}> is outside the supported subset"))),
        };
        if slot.replace(child).is_some() {
            return Err(cx.err(child, format!("repeated <{}>", child.tag_name().name())));
        }
    }
    let target = target.ok_or_else(|| cx.err(root, "missing <Target>"))?;
    let rule = rule.ok_or_else(|| cx.err(root, "missing <Rule>"))?;
    let description = description.ok_or_else(|| cx.err(root, "missing <Description> with policy metadata"))?;
    let policy = parse_description(&cx, description)?;
    let stream = parse_target(&cx, target)?;
    let (op, theta) = parse_rule(&cx, rule)?;
    if (op, theta) != policy.condition() {
        return Err(cx.err(rule, "rule condition disagrees with the policy metadata"));
    }
    Ok(XacmlPolicy { id: id.to_string(), stream, policy })
}

fn request_attribute(cx: &Ctx<'_, '_>, parent: Node<'_, '_>, id: &str) -> Result<String, PolicyError> {
    let attr = cx.only_child(parent, "Attribute")?;
    cx.expect_attr(attr, "AttributeId", id)?;
    let value = cx.only_child(attr, "AttributeValue")?;
    Ok(cx.text(value)?.to_string())
}

/// Parses a request. The subject's `k` is kept as text; see
/// [`XacmlRequest::key`].
pub fn parse_request(xml: &str) -> Result<XacmlRequest, PolicyError> {
    let doc = parse_doc(xml)?;
    let cx = Ctx { doc: &doc };
    let root = doc.root_element();
    cx.expect_name(root, "Request")?;
    let mut subject = None;
    let mut resource = None;
    let mut action = None;
    for child in cx.elements(root)? {
        let slot = match child.tag_name().name() {
            "Subject" => &mut subject,
            "Resource" => &mut resource,
            "Action" => &mut action,
            other => return Err(cx.err(child, format!("element <{other}> is outside the supported subset"))),
        };
        if slot.replace(child).is_some() {
            return Err(cx.err(child, format!("repeated <{}>", child.tag_name().name())));
        }
    }
    if let Some(a) = action {
        if let Some(c) = cx.elements(a)?.first() {
            return Err(cx.err(*c, "<Action> must be empty"));
        }
    }
    let subject = subject.ok_or_else(|| cx.err(root, "missing <Subject>"))?;
    let resource = resource.ok_or_else(|| cx.err(root, "missing <Resource>"))?;
    let k = request_attribute(&cx, subject, SUBJECT_K)?.trim().to_string();
    let stream = request_attribute(&cx, resource, RESOURCE_ID)?;
    Ok(XacmlRequest { stream, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sliding-window policy with α = 9 in the documented subset.
    const WINDOW_ALPHA_9: &str = r#"<Policy PolicyId="sliding-9"
        RuleCombiningAlgId="urn:oasis:names:tc:xacml:1.0:rule-combining-algorithm:first-applicable">
      <Description>kind=window alpha=9 beta=5</Description>
      <Target><Resources><Resource>
        <ResourceMatch MatchId="urn:oasis:names:tc:xacml:1.0:function:string-equal">
          <AttributeValue DataType="http://www.w3.org/2001/XMLSchema#string">temperature</AttributeValue>
          <ResourceAttributeDesignator AttributeId="urn:oasis:names:tc:xacml:1.0:resource:resource-id"
              DataType="http://www.w3.org/2001/XMLSchema#string"/>
        </ResourceMatch>
      </Resource></Resources></Target>
      <Rule RuleId="r1" Effect="Permit">
        <Condition FunctionId="urn:oasis:names:tc:xacml:1.0:function:integer-greater-than-or-equal">
          <Apply FunctionId="urn:oasis:names:tc:xacml:1.0:function:integer-one-and-only">
            <SubjectAttributeDesignator AttributeId="k" DataType="http://www.w3.org/2001/XMLSchema#integer"/>
          </Apply>
          <AttributeValue DataType="http://www.w3.org/2001/XMLSchema#integer">9</AttributeValue>
        </Condition>
      </Rule>
    </Policy>"#;

    fn parse_err(xml: &str) -> (u32, u32, String) {
        match parse_policy(xml).unwrap_err() {
            PolicyError::Parse { line, col, reason } => (line, col, reason),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sliding_window_document() {
        let p = parse_policy(WINDOW_ALPHA_9).unwrap();
        assert_eq!(p.id, "sliding-9");
        assert_eq!(p.stream, "temperature");
        assert_eq!(p.policy, AccessPolicy::Window { alpha: 9, beta: 5 });
        assert_eq!(p.condition(), (CompareOp::Ge, 9));
    }

    #[test]
    fn empty_document_fails() {
        assert!(matches!(parse_policy(""), Err(PolicyError::Parse { .. })));
    }

    #[test]
    fn trigger_equal_round_trip() {
        let p = XacmlPolicy::new("eq42", "s", AccessPolicy::Trigger { theta: 42, op: CompareOp::Eq });
        let xml = emit_policy(&p);
        assert!(xml.contains("integer-equal"));
        let back = parse_policy(&xml).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.condition(), (CompareOp::Eq, 42));
    }

    #[test]
    fn request_carries_k_in_subject() {
        let xml = emit_request("temperature", 3);
        let doc = Document::parse(&xml).unwrap();
        let subject = doc.descendants().find(|n| n.has_tag_name("Subject")).unwrap();
        let value = subject.descendants().find(|n| n.has_tag_name("AttributeValue")).unwrap();
        assert_eq!(value.text(), Some("3"));
        let req = parse_request(&xml).unwrap();
        assert_eq!(req, XacmlRequest::new("temperature", 3));
    }

    #[test]
    fn max_key_round_trips() {
        let req = parse_request(&emit_request("s", u64::MAX)).unwrap();
        assert_eq!(req.key(), Ok(u64::MAX));
        let p = XacmlPolicy::new("le", "s", AccessPolicy::Trigger { theta: u64::MAX, op: CompareOp::Le });
        assert_eq!(parse_policy(&emit_policy(&p)).unwrap(), p);
    }

    #[test]
    fn escaping_round_trips() {
        let p = XacmlPolicy::new("a&b<\"c\">", "str'eam & co", AccessPolicy::Window { alpha: 0, beta: 1 });
        assert_eq!(parse_policy(&emit_policy(&p)).unwrap(), p);
        let req = parse_request(&emit_request("<&>", 5)).unwrap();
        assert_eq!(req.stream, "<&>");
    }

    #[test]
    fn unsupported_function_rejected_with_position() {
        let xml = WINDOW_ALPHA_9.replace("integer-greater-than-or-equal", "integer-add");
        let (line, col, reason) = parse_err(&xml);
        assert!(reason.contains("unsupported comparison function"), "{reason}");
        assert_eq!(line, 12);
        assert!(col > 1);
    }

    #[test]
    fn missing_target_rejected() {
        let start = WINDOW_ALPHA_9.find("<Target>").unwrap();
        let end = WINDOW_ALPHA_9.find("</Target>").unwrap() + "</Target>".len();
        let xml = format!("{}{}", &WINDOW_ALPHA_9[..start], &WINDOW_ALPHA_9[end..]);
        let (_, _, reason) = parse_err(&xml);
        assert_eq!(reason, "missing <Target>");
    }

    #[test]
    fn unknown_elements_rejected() {
        let xml = WINDOW_ALPHA_9.replace("<Description>", "<Obligations/><Description>");
        assert!(parse_err(&xml).2.contains("outside the supported subset"));
        let xml = WINDOW_ALPHA_9.replace("</Rule>", "</Rule><Rule Effect=\"Permit\"/>");
        assert!(parse_err(&xml).2.contains("repeated <Rule>"));
    }

    #[test]
    fn metadata_must_agree_with_rule() {
        let xml = WINDOW_ALPHA_9.replace("alpha=9", "alpha=10");
        assert!(parse_err(&xml).2.contains("disagrees"));
        let xml = WINDOW_ALPHA_9.replace("beta=5", "beta=0");
        assert!(parse_err(&xml).2.contains("invalid policy parameters"));
        let xml = WINDOW_ALPHA_9.replace("Effect=\"Permit\"", "Effect=\"Deny\"");
        assert!(parse_err(&xml).2.contains("unsupported Effect"));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let (line, _, _) = parse_err("<Policy>\n<Target>\n</Policy>");
        assert!(line >= 2);
    }

    #[test]
    fn request_errors() {
        let xml = emit_request("s", 4).replace("<Action/>", "<Action><Foo/></Action>");
        assert!(parse_request(&xml).is_err());
        let req = parse_request(&emit_request("s", 4).replace(">4<", ">four<")).unwrap();
        assert_eq!(req.key(), Err(PolicyError::BadKey("four".into())));
    }

    fn arb_policy() -> impl Strategy<Value = XacmlPolicy> {
        let window = (any::<u64>(), 1u32..).prop_map(|(alpha, beta)| AccessPolicy::Window { alpha, beta });
        let trigger = (any::<u64>(), 0usize..5).prop_filter_map("θ out of range", |(theta, op)| {
            let p = AccessPolicy::Trigger { theta, op: CompareOp::ALL[op] };
            p.validate().is_ok().then_some(p)
        });
        ("[a-zA-Z0-9_&<>\"' -]{1,16}", "[a-zA-Z0-9_&<>.-]{1,16}", prop_oneof![window, trigger])
            .prop_map(|(id, stream, policy)| XacmlPolicy { id, stream, policy })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn emitted_policies_round_trip(p in arb_policy()) {
            prop_assert_eq!(parse_policy(&emit_policy(&p)).unwrap(), p);
        }

        #[test]
        fn emitted_requests_round_trip(stream in "[a-z0-9&<>]{1,12}", k in any::<u64>()) {
            let req = parse_request(&emit_request(&stream, k)).unwrap();
            prop_assert_eq!(req.key().unwrap(), k);
            prop_assert_eq!(req.stream, stream);
        }

        #[test]
        fn parser_is_total(s in ".{0,200}") {
            let _ = parse_policy(&s);
            let _ = parse_request(&s);
        }
    }
}
