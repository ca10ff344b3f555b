use mgspan::corpus::{decode_article, project_spans, tokenize, Article, Label, Span, Token};
use mgspan::spanops::merge_spans;
use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = String> {
    let pieces = prop::sample::select(vec![
        "word", "Caps", "x", "42", "café", "€", "naïve", "日本", "🙂", " ", "  ", "\n", ".", "!", "?", ",", "'",
        "\"", "-", "(", ")",
    ]);
    prop::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn token_offsets_are_exact(text in text_strategy()) {
        let a = Article::new("1", text.clone());
        let chars: Vec<char> = text.chars().collect();
        let tokens = tokenize(&a);
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0;
        for t in &tokens {
            prop_assert!(t.start < t.end && t.start >= prev_end);
            prev_end = t.end;
            let surface: String = chars[t.start..t.end].iter().collect();
            prop_assert_eq!(&surface, &t.surface);
            let (s, e) = a.sentence_bounds()[t.sentence_idx];
            prop_assert!(s <= t.start && t.end <= e);
            for c in &mut covered[t.start..t.end] {
                *c = true;
            }
        }
        for (c, cov) in chars.iter().zip(&covered) {
            prop_assert_eq!(!c.is_whitespace(), *cov, "char {:?}", c);
        }
    }
}

/// Random article plus token-aligned spans inside sentences, separated by
/// at least one unlabelled token.
fn aligned_case() -> impl Strategy<Value = (Article, Vec<Token>, Vec<Span>)> {
    let words = prop::collection::vec(prop::sample::select(vec!["alpha", "be", "c", "dd", "e."]), 1..30);
    (words, any::<u64>()).prop_map(|(words, bits)| {
        let a = Article::new("7", words.join(" "));
        let tokens = tokenize(&a);
        let mut spans = Vec::new();
        let mut i = 0;
        let mut b = bits;
        while i < tokens.len() {
            let take = b & 1 == 1;
            let len = ((b >> 1) & 3) as usize + 1;
            b = b.rotate_right(3);
            if take {
                let sent = tokens[i].sentence_idx;
                let mut j = i;
                while j + 1 < tokens.len() && j + 1 < i + len && tokens[j + 1].sentence_idx == sent {
                    j += 1;
                }
                spans.push(Span::new("7", tokens[i].start, tokens[j].end));
                i = j + 2;
            } else {
                i += 1;
            }
        }
        (a, tokens, spans)
    })
}

proptest! {
    #[test]
    fn decode_inverts_projection_for_aligned_spans((a, tokens, spans) in aligned_case()) {
        let labels = project_spans(&a, &tokens, &spans);
        prop_assert_eq!(decode_article(&a, &tokens, &labels), merge_spans(&spans));
    }

    #[test]
    fn projection_is_a_fixed_point_after_one_round(text in text_strategy(), raw in prop::collection::vec((0usize..200, 1usize..20), 0..5)) {
        let a = Article::new("9", text);
        let n = a.char_len();
        prop_assume!(n > 0);
        let spans: Vec<Span> = raw.into_iter().map(|(s, l)| {
            let s = s % n;
            Span::new("9", s, (s + l).min(n))
        }).collect();
        let tokens = tokenize(&a);
        let once = project_spans(&a, &tokens, &spans);
        let decoded = decode_article(&a, &tokens, &once);
        prop_assert_eq!(project_spans(&a, &tokens, &decoded), once);
    }

    #[test]
    fn adding_spans_never_removes_prop_tokens(text in text_strategy(), raw in prop::collection::vec((0usize..200, 1usize..20), 1..6)) {
        let a = Article::new("3", text);
        let n = a.char_len();
        prop_assume!(n > 0);
        let spans: Vec<Span> = raw.into_iter().map(|(s, l)| {
            let s = s % n;
            Span::new("3", s, (s + l).min(n))
        }).collect();
        let tokens = tokenize(&a);
        let fewer = project_spans(&a, &tokens, &spans[..spans.len() - 1]);
        let more = project_spans(&a, &tokens, &spans);
        for (f, m) in fewer.iter().zip(&more) {
            for (x, y) in f.labels.iter().zip(&m.labels) {
                prop_assert!(!(*x == Label::Prop && *y == Label::NonProp));
            }
        }
    }
}
