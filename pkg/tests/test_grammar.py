"""Grammar-constrained decoding: masks, sessions, generation."""

import random

import pytest

from litrag.grammar import (
    BudgetExhaustedError,
    DecodeSession,
    GrammarUnreachableError,
    IllegalTokenError,
    SessionClosedError,
    Vocabulary,
    advance,
    allowed_tokens,
    constrained_generate,
    load_vocabulary,
    new_session,
    query_grammar,
    save_vocabulary,
    stub_ascii_vocabulary,
    vocabulary_from_texts,
)
from litrag.grammar import _kernel_py
from litrag.query_ast import parse, serialize

from oracles import oracle_mask, prefix_language, random_walk_states

try:
    from litrag.grammar import _kernel_cy
    KERNELS = [_kernel_py, _kernel_cy]
except ImportError:
    _kernel_cy = None
    KERNELS = [_kernel_py]

STUB = stub_ascii_vocabulary()


def char_id(ch: str) -> int:
    return ord(ch) - 0x20


def drive(session: DecodeSession, text: str) -> DecodeSession:
    for ch in text:
        session.advance(char_id(ch))
    return session


def allowed_chars(session: DecodeSession) -> set:
    mask = session.allowed_tokens()
    return {STUB.tokens[tid].decode() for tid in mask.allowed_ids()}


REDUCED_KWARGS = dict(
    max_depth=2,
    term_bytes=b"ab",
    phrase_bytes=b"x",
    allow_utf8=False,
    max_term_len=2,
    max_group_terms=2,
    max_phrase_len=2,
)


@pytest.fixture(scope="module")
def reduced():
    grammar = query_grammar(("abs",), **REDUCED_KWARGS)
    prefixes, sentences = prefix_language(grammar, 31)
    return grammar, prefixes, sentences


class TestMaskExamples:
    def test_start_mask_default_fields(self):
        session = new_session(STUB)
        assert allowed_chars(session) == {"(", "a", "y"}
        assert session.allowed_tokens().eos_allowed is False

    def test_start_mask_multichar_tokens(self):
        vocab = vocabulary_from_texts(
            ["(", ")", '"', ":", "9", "z ", "a", "ab", "abs", "abs:", "au", "author", "ye"]
        )
        session = DecodeSession(query_grammar(("abs",)), vocab)
        mask = session.allowed_tokens()
        names = {vocab.tokens[tid].decode() for tid in mask.allowed_ids()}
        assert names == {"(", "a", "ab", "abs", "abs:"}
        assert mask.eos_allowed is False
        # with the author and year fields configured, their prefixes open up
        session = new_session(vocab)
        names = {vocab.tokens[tid].decode() for tid in session.allowed_tokens().allowed_ids()}
        assert names == {"(", "a", "ab", "abs", "abs:", "au", "author", "ye"}

    def test_open_group_prefix(self):
        session = drive(new_session(STUB), "(abs:(black holes")
        chars = allowed_chars(session)
        assert ")" in chars and " " in chars
        assert {"a", "z", "A", "0", "-", "_"} <= chars
        assert '"' not in chars and ":" not in chars
        assert session.allowed_tokens().eos_allowed is False

    def test_closed_group_prefix(self):
        session = drive(new_session(STUB), "(abs:(black holes)")
        assert allowed_chars(session) == {")", " "}
        assert session.allowed_tokens().eos_allowed is False

    def test_complete_sentence_allows_only_eos(self):
        session = drive(new_session(STUB), "(abs:(black holes))")
        mask = session.allowed_tokens()
        assert mask.count() == 0
        assert mask.eos_allowed is True

    def test_year_value_digits(self):
        session = drive(new_session(STUB), "(year:")
        assert allowed_chars(session) == set("123456789")
        drive(session, "2016")
        assert allowed_chars(session) == {")", " "}
        # never a fifth digit
        assert not session.allowed_tokens().is_allowed(char_id("5"))

    def test_reserved_word_not_a_term(self):
        session = drive(new_session(STUB), "(abs:AN")
        assert "D" in allowed_chars(session)  # ANDx is a fine term
        drive(session, "D")
        chars = allowed_chars(session)
        assert ")" not in chars and " " not in chars  # AND alone is reserved
        assert "x" in chars
        drive(session, "x")
        assert ")" in allowed_chars(session)

    def test_phrase_requires_content(self):
        session = drive(new_session(STUB), '(author:"')
        chars = allowed_chars(session)
        assert '"' not in chars  # empty phrase is not a phrase
        assert "K" in chars and " " in chars
        drive(session, 'Kurtz, Michael')
        assert '"' in allowed_chars(session)


@pytest.fixture(scope="module")
def byte_vocab():
    # a byte-level vocabulary: every byte value as a 1-byte token
    return vocabulary_from_texts([bytes([b]) for b in range(256)])


class TestUtf8Phrases:

    def agreed(self, session, byte: int) -> bool:
        return session.allowed_tokens().is_allowed(byte)

    def test_wellformed_sequences_only(self, byte_vocab):
        session = DecodeSession(query_grammar(("abs",)), byte_vocab)
        for byte in b'(abs:"':
            session.advance(byte)
        assert self.agreed(session, 0xC3)          # é lead byte
        assert not self.agreed(session, 0x80)      # bare continuation
        assert not self.agreed(session, 0xC0)      # overlong lead
        assert not self.agreed(session, 0xC1)
        assert not self.agreed(session, 0xF5)      # beyond U+10FFFF
        session.advance(0xC3)
        assert self.agreed(session, 0xA9)          # continuation byte
        assert not self.agreed(session, ord("x"))  # ascii can't continue C3
        assert not self.agreed(session, ord('"'))
        session.advance(0xA9)
        assert self.agreed(session, ord('"'))
        # surrogate range excluded: ED A0 must be dead
        session2 = DecodeSession(query_grammar(("abs",)), byte_vocab)
        for byte in b'(abs:"':
            session2.advance(byte)
        session2.advance(0xED)
        assert self.agreed(session2, 0x9F)
        assert not self.agreed(session2, 0xA0)

    def test_constrained_output_decodes(self, byte_vocab):
        session = DecodeSession(query_grammar(("abs",)), byte_vocab)
        target = '(abs:"Hénon–Heiles π")'.encode("utf-8")

        def proposer(s):
            want = target[len(s.emitted_bytes)] if len(s.emitted_bytes) < len(target) else None
            return [1.0 if tid == want else 0.0 for tid in range(byte_vocab.size)]

        text = constrained_generate(session, proposer, max_tokens=64)
        assert text == '(abs:"Hénon–Heiles π")'
        parse(text, fields=("abs",))


class TestOracleParity:
    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.KERNEL_NAME)
    def test_masks_match_oracle_single_byte(self, reduced, kernel):
        grammar, prefixes, sentences = reduced
        checked = set()
        for emitted, mask, _ in random_walk_states(
            grammar, STUB, n_walks=110, max_steps=30, seed=4242, byte_cap=30, kernel=kernel
        ):
            if emitted in checked:
                continue
            checked.add(emitted)
            want_allowed, want_eos = oracle_mask(prefixes, sentences, emitted, STUB)
            assert set(mask.allowed_ids()) == want_allowed, emitted
            assert mask.eos_allowed == want_eos, emitted
        assert len(checked) >= 400

    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.KERNEL_NAME)
    def test_masks_match_oracle_multibyte(self, reduced, kernel):
        grammar, prefixes, sentences = reduced
        vocab = vocabulary_from_texts(
            ["(", ")", "a", "b", "x", '"', ":", " ", "ab", "abs", "abs:",
             "(abs:", "))", " AND ", " OR (", "ba", 'a"', "(a"]
        )
        checked = set()
        for emitted, mask, _ in random_walk_states(
            grammar, vocab, n_walks=120, max_steps=16, seed=99, byte_cap=25, kernel=kernel
        ):
            if emitted in checked:
                continue
            checked.add(emitted)
            want_allowed, want_eos = oracle_mask(prefixes, sentences, emitted, vocab)
            assert set(mask.allowed_ids()) == want_allowed, emitted
            assert mask.eos_allowed == want_eos, emitted
        assert len(checked) >= 100


class TestKernelParity:
    @pytest.mark.skipif(_kernel_cy is None, reason="compiled kernel not built")
    def test_kernels_agree_on_full_grammar(self):
        grammar = query_grammar(("author", "abs", "year"))
        rng = random.Random(7)
        for _ in range(40):
            py = DecodeSession(grammar, STUB, kernel=_kernel_py)
            cy = DecodeSession(grammar, STUB, kernel=_kernel_cy)
            for _ in range(40):
                pm, cm = py.allowed_tokens(), cy.allowed_tokens()
                assert pm.allowed == cm.allowed
                assert pm.eos_allowed == cm.eos_allowed
                ids = pm.allowed_ids()
                if pm.eos_allowed:
                    ids.append(STUB.eos_id)
                if not ids:
                    break
                token = rng.choice(ids)
                if token == STUB.eos_id:
                    break
                py.advance(token)
                cy.advance(token)


class TestSessionContract:
    def test_disallowed_token_raises_and_preserves_state(self):
        session = drive(new_session(STUB), "(abs:")
        before = bytes(session.allowed_tokens().allowed)
        with pytest.raises(IllegalTokenError):
            session.advance(char_id(")"))
        assert bytes(session.allowed_tokens().allowed) == before
        assert session.emitted == "(abs:"
        session.advance(char_id("x"))  # still usable

    def test_out_of_range_token(self):
        session = new_session(STUB)
        with pytest.raises(IllegalTokenError):
            session.advance(STUB.size + 5)
        with pytest.raises(IllegalTokenError):
            session.advance(-1)

    def test_eos_only_when_accepting(self):
        session = new_session(STUB)
        with pytest.raises(IllegalTokenError):
            session.advance(STUB.eos_id)
        drive(session, "(abs:dust)")
        assert session.accepting
        session.advance(STUB.eos_id)
        assert session.closed
        with pytest.raises(SessionClosedError):
            session.allowed_tokens()
        with pytest.raises(SessionClosedError):
            session.advance(char_id("a"))

    def test_module_level_operations(self):
        session = new_session(STUB)
        mask = allowed_tokens(session)
        assert mask.count() > 0
        assert advance(session, char_id("(")) is session

    def test_unreachable_vocabulary(self):
        digits = vocabulary_from_texts(list("0123456789"))
        with pytest.raises(GrammarUnreachableError):
            new_session(digits)


class TestConstrainedGenerate:
    def scripted(self, target: str):
        encoded = target.encode("utf-8")

        def proposer(session):
            scores = [0.0] * STUB.size
            done = session.emitted_bytes
            if encoded.startswith(done):
                rest = encoded[len(done):]
                if not rest:
                    scores[STUB.eos_id] = 10.0
                else:
                    for tid, text in enumerate(STUB.tokens):
                        if tid != STUB.eos_id and rest.startswith(text):
                            scores[tid] = 10.0
            return scores

        return proposer

    def test_scripted_target_reproduced(self):
        target = '((author:"Kurtz, Michael") AND (year:2016))'
        session = new_session(STUB)
        out = constrained_generate(session, self.scripted(target), max_tokens=128)
        assert out == target
        assert session.closed
        parse(out)

    def test_determinism(self):
        target = "(abs:(black holes))"
        runs = {
            constrained_generate(new_session(STUB), self.scripted(target), max_tokens=64)
            for _ in range(3)
        }
        assert runs == {target}

    def test_budget_hit_while_accepting_returns(self):
        # favors 'a' everywhere: forced through "abs:" then rides bare-term
        # 'aaa...'; the budget lands mid-term where the string accepts
        def proposer(session):
            scores = [0.0] * STUB.size
            scores[char_id("a")] = 5.0
            return scores

        out = constrained_generate(new_session(STUB), proposer, max_tokens=10)
        assert out == "abs:aaaaaa"
        parse(out)

    def test_budget_exhausted_on_hostile_proposer(self):
        # all-zero scores tie-break to '(' forever: never accepting
        def proposer(session):
            return [0.0] * STUB.size

        with pytest.raises(BudgetExhaustedError) as err:
            constrained_generate(new_session(STUB), proposer, max_tokens=12)
        assert err.value.steps == 24
        assert set(err.value.emitted) == {"("}

    def test_random_proposers_always_parse(self):
        rng = random.Random(2024)
        for _ in range(25):
            seed = rng.randrange(2**32)
            noise = random.Random(seed)

            def proposer(session, noise=noise):
                return [noise.random() for _ in range(STUB.size)]

            out = constrained_generate(new_session(STUB), proposer, max_tokens=600)
            node = parse(out)
            assert serialize(node)  # canonicalizes without error

    def test_temperature_sampling_stays_grammatical(self):
        rng = random.Random(11)

        def proposer(session):
            return [1.0] * STUB.size

        for _ in range(5):
            out = constrained_generate(
                new_session(STUB), proposer, max_tokens=400, temperature=1.0, rng=rng
            )
            parse(out)


class TestVocabularyIO:
    def test_jsonl_round_trip(self, tmp_path):
        vocab = vocabulary_from_texts(["(", "abs", ":", "dust", ")", " AND "])
        path = tmp_path / "vocab.jsonl"
        save_vocabulary(vocab, path)
        loaded = load_vocabulary(path)
        assert loaded == vocab

    def test_eos_line_required(self, tmp_path):
        path = tmp_path / "vocab.jsonl"
        path.write_text('{"id": 0, "text_b64": "YQ=="}\n')
        with pytest.raises(ValueError, match="eos_id"):
            load_vocabulary(path)

    def test_dense_ids_required(self, tmp_path):
        path = tmp_path / "vocab.jsonl"
        path.write_text('{"id": 0, "text_b64": "YQ=="}\n{"id": 2, "text_b64": "Yg=="}\n{"eos_id": 3}\n')
        with pytest.raises(ValueError, match="dense"):
            load_vocabulary(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "vocab.jsonl"
        path.write_text('{"id": 0, "text_b64": "YQ=="}\n{"id": 0, "text_b64": "Yg=="}\n{"eos_id": 1}\n')
        with pytest.raises(ValueError, match="duplicate"):
            load_vocabulary(path)

    def test_empty_non_eos_token_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            Vocabulary((b"a", b"", b""), 2)

    def test_byte_level_vocabulary_opens_session(self, tmp_path):
        # the shape of a real byte-level tokenizer: 256 raw bytes plus
        # merged pieces, persisted and reloaded
        texts = [bytes([b]) for b in range(256)]
        texts += [b"ab", b"abs", b"author", b"year", b" AND ", b'")', b"))"]
        vocab = vocabulary_from_texts(texts)
        path = tmp_path / "byte_vocab.jsonl"
        save_vocabulary(vocab, path)
        vocab = load_vocabulary(path)
        session = new_session(vocab)
        mask = session.allowed_tokens()
        assert mask.is_allowed(ord("("))
        assert mask.is_allowed(texts.index(b"abs"))
        assert not mask.is_allowed(ord(")"))
