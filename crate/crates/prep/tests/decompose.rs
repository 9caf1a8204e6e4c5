use std::collections::BTreeMap;

use gas_prep::{
    decompose_request, generate_scenario, parse_plan_response, ChatClient, ChatRequest,
    MockChatClient, PlanDraft, PrepError, SourceImage, UserRequest,
};
use image::RgbImage;
use proptest::prelude::*;

const EXAMPLE_1: &str = include_str!("fixtures/worked_example.txt");
const REQUEST_1: &str =
    "Change a dog into a cat. Change a car into a Lego car. Change the dirt into the asphalt road.";

fn image() -> SourceImage {
    SourceImage::new(RgbImage::new(64, 64), "dog.png").unwrap()
}

fn expected() -> PlanDraft {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    PlanDraft::new(
        s(&[
            "a dog",
            "a car",
            "the dirt",
            "A dog is running in front of a car on the dirt.",
        ]),
        s(&[
            "a cat",
            "a Lego car",
            "the asphalt road",
            "A cat is running in front of a Lego car on the asphalt road.",
        ]),
        vec![true, false, false, false],
    )
    .unwrap()
}

#[test]
fn worked_example_through_mock_client() {
    let chat = MockChatClient::new(BTreeMap::from([(
        REQUEST_1.to_string(),
        EXAMPLE_1.to_string(),
    )]));
    let req = UserRequest::new(image(), REQUEST_1).unwrap();
    assert_eq!(decompose_request(&req, &chat).unwrap(), expected());
}

/// Captures the prompt the pipeline sends.
struct Spy(std::sync::Mutex<Vec<String>>, String);

impl ChatClient for Spy {
    fn complete(&self, req: &ChatRequest<'_>) -> gas_prep::Result<String> {
        self.0.lock().unwrap().push(req.prompt.to_string());
        assert!(!req.image_png.is_empty());
        Ok(self.1.clone())
    }
}

#[test]
fn request_is_substituted_into_the_template() {
    let spy = Spy(Default::default(), EXAMPLE_1.to_string());
    let req = UserRequest::new(image(), REQUEST_1).unwrap();
    decompose_request(&req, &spy).unwrap();
    let sent = spy.0.lock().unwrap()[0].clone();
    assert!(sent.contains(&format!("Requests:{REQUEST_1}\n")));
    assert!(sent.starts_with(
        gas_prep::prompts::DECOMPOSE_PROMPT
            .split("{responses}")
            .next()
            .unwrap()
    ));
}

#[test]
fn missing_preserve_form_returns_no_partial_plan() {
    let raw = EXAMPLE_1.replace("'preserve_form': [1, 0, 0, 0]", "");
    let chat = MockChatClient::new(BTreeMap::from([(REQUEST_1.to_string(), raw.clone())]));
    let req = UserRequest::new(image(), REQUEST_1).unwrap();
    match decompose_request(&req, &chat) {
        Err(PrepError::Parse { raw: r, .. }) => assert_eq!(r, raw),
        other => panic!("{other:?}"),
    }
}

#[test]
fn recorded_scenario_fixture() {
    let chat = MockChatClient::new(BTreeMap::from([(
        "scenario".to_string(),
        include_str!("fixtures/scenario_recorded.txt").to_string(),
    )]));
    assert_eq!(
        generate_scenario(&image(), &chat).unwrap(),
        [
            "change a brown dog into a white cat",
            "change a red ball into a blue cube",
            "change green grass into white snow"
        ]
    );
}

fn final_block(sources: &[String], targets: &[String], flags: &[u8], q: char) -> String {
    let list = |v: &[String]| {
        v.iter()
            .map(|s| format!("{q}{s}{q}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let f = flags
        .iter()
        .map(u8::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Final answer:\n'source_list': [{}]\n'target_list': [{}]\n'preserve_form': [{f}]\n",
        list(sources),
        list(targets)
    )
}

fn phrase() -> impl Strategy<Value = String> {
    "[a-z][a-z ]{0,12}[a-z]"
}

/// Perturbations that a chat model plausibly produces.
#[derive(Debug, Clone)]
enum Mutation {
    None,
    Fence,
    Bold,
    DeleteChar(usize),
    InsertChar(usize, char),
    Truncate(usize),
    DropKey(usize),
    DuplicateFlag,
    BadFlag,
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        Just(Mutation::None),
        Just(Mutation::Fence),
        Just(Mutation::Bold),
        any::<usize>().prop_map(Mutation::DeleteChar),
        (
            any::<usize>(),
            prop::sample::select(vec!['[', ']', ',', '"', '\'', ':', '\n', 'x', '1'])
        )
            .prop_map(|(i, c)| Mutation::InsertChar(i, c)),
        any::<usize>().prop_map(Mutation::Truncate),
        (0usize..3).prop_map(Mutation::DropKey),
        Just(Mutation::DuplicateFlag),
        Just(Mutation::BadFlag),
    ]
}

fn apply(text: &str, m: &Mutation) -> String {
    let chars: Vec<char> = text.chars().collect();
    let at = |i: usize| i % (chars.len() + 1);
    match m {
        Mutation::None => text.to_string(),
        Mutation::Fence => format!("```json\n{text}```\n"),
        Mutation::Bold => text.replace("Final answer", "**Final answer**"),
        Mutation::DeleteChar(i) => {
            let mut c = chars.clone();
            if !c.is_empty() {
                c.remove(i % c.len());
            }
            c.into_iter().collect()
        }
        Mutation::InsertChar(i, ch) => {
            let mut c = chars.clone();
            c.insert(at(*i), *ch);
            c.into_iter().collect()
        }
        Mutation::Truncate(i) => chars[..at(*i)].iter().collect(),
        Mutation::DropKey(k) => {
            let key = ["'source_list'", "'target_list'", "'preserve_form'"][*k];
            text.lines()
                .filter(|l| !l.starts_with(key))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Mutation::DuplicateFlag => text.replacen("'preserve_form': [", "'preserve_form': [0, ", 1),
        Mutation::BadFlag => text.replacen("'preserve_form': [", "'preserve_form': [yes, ", 1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn near_valid_responses_never_yield_invalid_drafts(
        n in 1usize..5,
        words in prop::collection::vec((phrase(), phrase()), 5),
        flags in prop::collection::vec(0u8..2, 5),
        q in prop::sample::select(vec!['"', '\'']),
        m1 in mutation(),
        m2 in mutation(),
    ) {
        let sources: Vec<String> = words[..=n].iter().map(|w| w.0.clone()).collect();
        let targets: Vec<String> = words[..=n].iter().map(|w| w.1.clone()).collect();
        let base = final_block(&sources, &targets, &flags[..=n], q);
        let raw = apply(&apply(&base, &m1), &m2);
        match parse_plan_response(&raw) {
            Ok(d) => {
                let len = d.source_list().len();
                prop_assert!(len >= 2);
                prop_assert_eq!(d.target_list().len(), len);
                prop_assert_eq!(d.preserve_form().len(), len);
                prop_assert!(d.source_list().iter().chain(d.target_list()).all(|s| !s.trim().is_empty()));
            }
            Err(PrepError::Parse { raw: r, .. }) => prop_assert_eq!(r, raw),
            Err(PrepError::MalformedPlan(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e:?}"),
        }
    }

    #[test]
    fn tolerated_formatting_parses_exactly(
        n in 1usize..5,
        words in prop::collection::vec((phrase(), phrase()), 5),
        flags in prop::collection::vec(0u8..2, 5),
        q in prop::sample::select(vec!['"', '\'']),
        fence in any::<bool>(),
        bold in any::<bool>(),
    ) {
        let sources: Vec<String> = words[..=n].iter().map(|w| w.0.clone()).collect();
        let targets: Vec<String> = words[..=n].iter().map(|w| w.1.clone()).collect();
        let mut raw = final_block(&sources, &targets, &flags[..=n], q);
        if bold { raw = apply(&raw, &Mutation::Bold); }
        if fence { raw = apply(&raw, &Mutation::Fence); }
        let d = parse_plan_response(&raw).unwrap();
        prop_assert_eq!(d.source_list(), &sources[..]);
        prop_assert_eq!(d.target_list(), &targets[..]);
        let want: Vec<bool> = flags[..=n].iter().map(|&f| f == 1).collect();
        prop_assert_eq!(d.preserve_form(), &want[..]);
    }
}
