import string

import pytest
from hypothesis import given, settings, strategies as st

from sunset.textmatch import (
    EmptyEvidence,
    lcs_dp,
    locate_reference_sentences,
    longest_common_substring,
    match_evidence,
    normalize,
    split_sentences,
)


class TestNormalize:
    def test_collapses_whitespace(self):
        assert normalize("a\n\n b") == "a b"

    def test_maps_curly_quotes(self):
        assert normalize("“x”") == '"x"'
        assert normalize("it’s") == "it's"

    def test_maps_dashes(self):
        assert normalize("a — b") == "a - b"

    def test_already_normal_unchanged(self):
        assert normalize("plain text.") == "plain text."

    @given(st.text(max_size=200))
    def test_idempotent(self, s):
        assert normalize(normalize(s)) == normalize(s)


class TestSplitSentences:
    def test_two_sentences(self):
        sents = split_sentences("A cat. A dog.")
        assert [s.text for s in sents] == ["A cat.", "A dog."]
        assert [s.start for s in sents] == [0, 7]

    def test_abbreviation_not_split(self):
        sents = split_sentences("See Fig. 3 for details.")
        assert len(sents) == 1

    def test_decimal_then_real_boundary(self):
        sents = split_sentences("Pi is 3.14. Yes.")
        assert [s.text for s in sents] == ["Pi is 3.14.", "Yes."]

    def test_initials_not_split(self):
        sents = split_sentences("Ask J. Smith. He knows.")
        assert [s.text for s in sents] == ["Ask J. Smith.", "He knows."]

    def test_question_and_quote_openers(self):
        sents = split_sentences('Why? "Because," she said.')
        assert [s.text for s in sents] == ["Why?", '"Because," she said.']

    @given(
        st.lists(
            st.text(alphabet="abcDEF .?!", min_size=1, max_size=30),
            max_size=6,
        )
    )
    def test_offsets_partition_input(self, parts):
        text = " ".join(parts)
        sents = split_sentences(text)
        prev_end = 0
        for s in sents:
            # sentence text occurs exactly at its offset
            assert text[s.start : s.end] == s.text
            # gap before each sentence is whitespace only
            assert text[prev_end : s.start].strip() == ""
            assert s.start >= prev_end
            prev_end = s.end
        assert text[prev_end:].strip() == ""


@st.composite
def string_pairs(draw):
    size = draw(st.integers(min_value=2, max_value=26))
    alphabet = string.ascii_lowercase[:size]
    a = draw(st.text(alphabet=alphabet, max_size=200))
    b = draw(st.text(alphabet=alphabet, max_size=200))
    return a, b


class TestLcs:
    def test_simple(self):
        assert longest_common_substring("abc", "zabcy") == (3, 0, 1)

    def test_disjoint_alphabets(self):
        assert longest_common_substring("xy", "ab") == (0, 0, 0)

    def test_empty(self):
        assert longest_common_substring("", "abc") == (0, 0, 0)
        assert longest_common_substring("abc", "") == (0, 0, 0)

    def test_tie_earliest_in_b(self):
        # "ab" occurs in b at 1 and 4; earliest wins
        assert longest_common_substring("ab", "xabyab") == (2, 0, 1)

    def test_tie_earliest_in_a(self):
        # best substring "aa" occurs in a at 0 and 1; earliest wins
        assert longest_common_substring("aaa", "zaaz") == (2, 0, 1)

    def test_dp_oracle_fixture(self):
        assert lcs_dp("abc", "zabcy") == (3, 0, 1)
        assert lcs_dp("ab", "xabyab") == (2, 0, 1)

    @settings(max_examples=500, deadline=None)
    @given(string_pairs())
    def test_matches_dp_oracle(self, pair):
        a, b = pair
        assert longest_common_substring(a, b) == lcs_dp(a, b)


class TestMatchEvidence:
    def test_exact_slice(self):
        ctx = "The quick brown fox jumps over the lazy dog"
        ev = ctx[10:25]
        m = match_evidence(ev, ctx)
        assert m.exact and m.overlap == 1.0
        assert m.context_offset == 10
        assert m.relative_position == pytest.approx((10 + 15 / 2) / len(ctx))

    def test_half_overlap_at_threshold(self):
        # LCS("ABCDEFGH", ctx) = "ABCD": confirmed against the DP oracle below
        ctx = "zz ABCD zz"
        m = match_evidence("ABCDEFGH", ctx)
        assert lcs_dp("ABCDEFGH", normalize(ctx))[0] == 4
        assert not m.exact
        assert m.overlap == 0.5
        assert m.matched  # threshold is inclusive

    def test_low_overlap_unmatched(self):
        ctx = "zzz abc zzz"
        m = match_evidence("abcdefghij", ctx)
        assert lcs_dp("abcdefghij", normalize(ctx))[0] == 3
        assert m.overlap == 0.3
        assert not m.matched
        assert m.relative_position is None

    def test_first_occurrence_used(self):
        ctx = "foo bar foo bar"
        m = match_evidence("foo", ctx)
        assert m.exact and m.context_offset == 0

    def test_empty_evidence(self):
        with pytest.raises(EmptyEvidence):
            match_evidence("   ", "context")

    def test_empty_context(self):
        with pytest.raises(ValueError):
            match_evidence("x", "")

    @given(st.data())
    def test_slices_always_exact(self, data):
        ctx = data.draw(st.text(alphabet="abcdef gh", min_size=5, max_size=120))
        if not normalize(ctx):
            return
        lo = data.draw(st.integers(min_value=0, max_value=len(ctx) - 1))
        hi = data.draw(st.integers(min_value=lo + 1, max_value=len(ctx)))
        ev = ctx[lo:hi]
        if not normalize(ev):
            return
        m = match_evidence(ev, ctx)
        assert m.exact
        assert 0.0 <= m.relative_position <= 1.0


class TestLocateReferenceSentences:
    CTX = "Aa bb. Cc dd. Ee ff."
    # sentence spans: [0,6) [7,13) [14,20); midpoints 3, 10, 17; length 20

    @staticmethod
    def _embedder(mapping):
        def embed(texts):
            return [mapping[t] for t in texts]

        return embed

    def test_identical_sentence(self):
        embed = self._embedder(
            {"Cc dd.": [0.0, 1.0, 0.0], "Aa bb.": [1.0, 0.0, 0.0], "Ee ff.": [0.0, 0.0, 1.0]}
        )
        pos = locate_reference_sentences("Cc dd.", self.CTX, embed)
        assert pos == [pytest.approx(10 / 20)]

    def test_orthogonal_ties_break_earliest(self):
        embed = self._embedder(
            {
                "Ref.": [0.0, 0.0, 0.0, 1.0],
                "Aa bb.": [1.0, 0.0, 0.0, 0.0],
                "Cc dd.": [0.0, 1.0, 0.0, 0.0],
                "Ee ff.": [0.0, 0.0, 1.0, 0.0],
            }
        )
        pos = locate_reference_sentences("Ref.", self.CTX, embed)
        assert pos == [pytest.approx(3 / 20)]

    def test_hand_computed_neighbors(self):
        # r1: cos = (0.6, 0.8, 0) -> nearest is sentence 2 (midpoint 10)
        # r2: cos = (0, 0.28, 0.96) -> nearest is sentence 3 (midpoint 17)
        embed = self._embedder(
            {
                "First ref.": [0.6, 0.8, 0.0],
                "Second ref.": [0.0, 0.28, 0.96],
                "Aa bb.": [1.0, 0.0, 0.0],
                "Cc dd.": [0.0, 1.0, 0.0],
                "Ee ff.": [0.0, 0.0, 1.0],
            }
        )
        pos = locate_reference_sentences("First ref. Second ref.", self.CTX, embed)
        assert pos == [pytest.approx(10 / 20), pytest.approx(17 / 20)]
