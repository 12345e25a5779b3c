//! Zero-shot prompt templates.
//!
//! A template may contain the placeholders `{question}` and `{passage}`.
//! Substitution is a single left-to-right pass over the template, so braces
//! inside the substituted text are never expanded.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::model::{DatasetKind, Instance};
use crate::{Error, Result};

pub const BOOLQ_TEMPLATE: &str = "Context: {passage}\nBased on the context, answer the following question with a single word: yes or no. Question: {question}\nAnswer:";

pub const POPQA_TEMPLATE: &str = "Question: {question}\nAnswer:";

pub const SIGA_TEMPLATE: &str = "Does the following statement contain abusive or unfair negative opinion against some social identity group? Answer with yes or no.\nStatement: {question}\nAnswer:";

const QUESTION: &str = "{question}";
const PASSAGE: &str = "{passage}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if !text.contains(QUESTION) {
            return Err(Error::InvalidInput(format!("template must contain {QUESTION}: {text:?}")));
        }
        Ok(Self(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn needs_passage(&self) -> bool {
        self.0.contains(PASSAGE)
    }

    pub fn render(&self, question: &str, passage: Option<&str>) -> Result<String> {
        let mut out = String::with_capacity(self.0.len() + question.len());
        let mut rest = self.0.as_str();
        while let Some(at) = rest.find('{') {
            out.push_str(&rest[..at]);
            let tail = &rest[at..];
            if let Some(after) = tail.strip_prefix(QUESTION) {
                out.push_str(question);
                rest = after;
            } else if let Some(after) = tail.strip_prefix(PASSAGE) {
                let p = passage.ok_or_else(|| {
                    Error::InvalidInput("template needs a passage but the instance has no context".into())
                })?;
                out.push_str(p);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Template registry keyed by dataset kind. Built-in kinds have defaults;
/// `custom` needs an explicit template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    templates: BTreeMap<DatasetKind, PromptTemplate>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        for (kind, text) in [
            (DatasetKind::Boolq, BOOLQ_TEMPLATE),
            (DatasetKind::Popqa, POPQA_TEMPLATE),
            (DatasetKind::Siga, SIGA_TEMPLATE),
        ] {
            templates.insert(kind, PromptTemplate(text.into()));
        }
        Self { templates }
    }
}

impl PromptTemplates {
    pub fn set(&mut self, kind: DatasetKind, template: PromptTemplate) {
        self.templates.insert(kind, template);
    }

    pub fn get(&self, kind: DatasetKind) -> Option<&PromptTemplate> {
        self.templates.get(&kind)
    }

    pub fn render(&self, instance: &Instance) -> Result<String> {
        let template = self.get(instance.dataset_kind).ok_or_else(|| {
            Error::InvalidInput(format!("no prompt template registered for dataset_kind {}", instance.dataset_kind))
        })?;
        template.render(&instance.input, instance.context.as_deref())
    }
}

/// Render with the built-in templates.
pub fn render_prompt(instance: &Instance) -> Result<String> {
    PromptTemplates::default().render(instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{boolq, instance};
    use crate::model::VariantType;
    use proptest::prelude::*;

    #[test]
    fn popqa() {
        let i = instance("g", "o", VariantType::Original, "Who wrote X?");
        assert_eq!(render_prompt(&i).unwrap(), "Question: Who wrote X?\nAnswer:");
    }

    #[test]
    fn boolq_prompt() {
        let i = boolq("g", "o", VariantType::Original, "is it?", "Some passage.");
        assert_eq!(
            render_prompt(&i).unwrap(),
            "Context: Some passage.\nBased on the context, answer the following question with a single word: yes or no. Question: is it?\nAnswer:"
        );
        let mut no_ctx = i.clone();
        no_ctx.context = None;
        assert!(render_prompt(&no_ctx).is_err());
    }

    #[test]
    fn siga_prompt() {
        let mut i = instance("g", "o", VariantType::Original, "People from other cultures are not like us.");
        i.dataset_kind = DatasetKind::Siga;
        assert_eq!(
            render_prompt(&i).unwrap(),
            "Does the following statement contain abusive or unfair negative opinion against some social identity group? Answer with yes or no.\nStatement: People from other cultures are not like us.\nAnswer:"
        );
    }

    #[test]
    fn custom_needs_registration() {
        let mut i = instance("g", "o", VariantType::Original, "q");
        i.dataset_kind = DatasetKind::Custom;
        assert!(render_prompt(&i).is_err());
        let mut t = PromptTemplates::default();
        t.set(DatasetKind::Custom, PromptTemplate::new("Q: {question} {x}").unwrap());
        assert_eq!(t.render(&i).unwrap(), "Q: q {x}");
        assert!(PromptTemplate::new("no placeholder").is_err());
    }

    #[test]
    fn question_braces_not_expanded() {
        let t = PromptTemplate::new("{question}|{passage}").unwrap();
        assert_eq!(t.render("{passage}", Some("P")).unwrap(), "{passage}|P");
    }

    proptest! {
        #[test]
        fn injective_in_question(a in ".{0,20}", b in ".{0,20}") {
            prop_assume!(a != b);
            let t = PromptTemplate::new(POPQA_TEMPLATE).unwrap();
            prop_assert_ne!(t.render(&a, None).unwrap(), t.render(&b, None).unwrap());
        }

        #[test]
        fn no_placeholder_left(q in "[^{}]{0,20}", p in "[^{}]{0,20}") {
            let t = PromptTemplate::new(BOOLQ_TEMPLATE).unwrap();
            let out = t.render(&q, Some(&p)).unwrap();
            prop_assert!(!out.contains(QUESTION) && !out.contains(PASSAGE));
        }
    }
}
