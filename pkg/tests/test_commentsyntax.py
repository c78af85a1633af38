"""Comment syntax lookup and comment-block rendering."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from assist_bridge.commentsyntax import CommentSyntax, SyntaxRegistry
from assist_bridge.errors import UnsupportedCommentSyntax
from assist_bridge.suggest import render_comment_mode, Suggestion
from assist_bridge.workspace import Position, Range


def suggestion(text: str, ordinal: int = 0, provider: str = "mock") -> Suggestion:
    zero = Range(Position(0, 0), Position(0, 0))
    return Suggestion(
        id=f"s1-{ordinal}", replace_range=zero, text=text, provider_id=provider, ordinal=ordinal
    )


def test_known_line_comment_languages():
    reg = SyntaxRegistry()
    assert reg.lookup("swift").line_prefix == "//"
    assert reg.lookup("rust").line_prefix == "//"
    assert reg.lookup("python").line_prefix == "#"
    assert reg.lookup("yaml").line_prefix == "#"


def test_block_comment_languages():
    reg = SyntaxRegistry()
    assert reg.lookup("html").block == ("<!--", "-->")
    assert reg.lookup("xml").block == ("<!--", "-->")


def test_languages_without_comments_resolve_to_none():
    reg = SyntaxRegistry()
    assert reg.lookup("json") is None
    assert reg.lookup("csv") is None
    assert reg.lookup("some-unknown-language") is None


def test_lookup_is_case_insensitive():
    reg = SyntaxRegistry()
    assert reg.lookup("SWIFT") == reg.lookup("swift")
    assert reg.lookup("Json") is None


def test_overrides_shadow_defaults():
    reg = SyntaxRegistry(
        {
            "json": CommentSyntax(language_id="json", line_prefix="//"),
            "swift": None,
        }
    )
    assert reg.lookup("json").line_prefix == "//"
    assert reg.lookup("swift") is None


def test_override_without_any_mechanism_counts_as_unsupported():
    reg = SyntaxRegistry({"brainf": CommentSyntax(language_id="brainf")})
    assert reg.lookup("brainf") is None


# ---- rendering --------------------------------------------------------------


def test_line_comment_rendering():
    syntax = SyntaxRegistry().lookup("swift")
    out = render_comment_mode(suggestion("let a = 1\nlet b = 2"), 3, syntax)
    assert out == (
        "// suggestion 1/3 from mock\n"
        "// let a = 1\n"
        "// let b = 2"
    )


def test_line_comment_rendering_keeps_empty_lines_bare():
    syntax = SyntaxRegistry().lookup("python")
    out = render_comment_mode(suggestion("a\n\nb", ordinal=2), 3, syntax)
    assert out == "# suggestion 3/3 from mock\n# a\n#\n# b"


def test_block_comment_rendering():
    syntax = SyntaxRegistry().lookup("html")
    out = render_comment_mode(suggestion("<p>hi</p>"), 1, syntax)
    assert out == "<!-- suggestion 1/1 from mock\n<p>hi</p>\n-->"


def test_empty_suggestion_renders_header_only():
    syntax = SyntaxRegistry().lookup("swift")
    assert render_comment_mode(suggestion(""), 1, syntax) == "// suggestion 1/1 from mock"
    block = SyntaxRegistry().lookup("html")
    assert render_comment_mode(suggestion(""), 1, block) == "<!-- suggestion 1/1 from mock\n-->"


def test_rendering_refused_without_syntax():
    with pytest.raises(UnsupportedCommentSyntax):
        render_comment_mode(suggestion("x"), 1, None)


@given(st.text(alphabet=st.sampled_from(list("ab\n x")), max_size=30))
def test_every_rendered_line_is_a_comment(text):
    syntax = SyntaxRegistry().lookup("swift")
    out = render_comment_mode(suggestion(text), 1, syntax)
    for line in out.split("\n"):
        assert line.startswith("//")


@given(st.integers(0, 9), st.integers(1, 10))
def test_header_counts_are_one_based(ordinal, extra):
    total = ordinal + extra
    syntax = SyntaxRegistry().lookup("swift")
    out = render_comment_mode(suggestion("x", ordinal=ordinal), total, syntax)
    assert out.split("\n")[0] == f"// suggestion {ordinal + 1}/{total} from mock"
