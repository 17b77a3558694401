import pytest

from transforge.codeblocks import (
    extract_code_block,
    fenced_blocks,
    looks_like_code,
    normalize_lang,
)
from transforge.errors import NoCodeBlockError


def test_normalize_lang_aliases():
    assert normalize_lang("Py") == "python"
    assert normalize_lang("C++") == "cpp"
    assert normalize_lang("golang") == "go"
    assert normalize_lang("rust") == "rust"


def test_fenced_blocks_in_order():
    text = (
        "Intro.\n```go\nfmt.Println(1)\n```\nmiddle\n```\nplain\n```\n"
    )
    assert fenced_blocks(text) == [
        ("go", "fmt.Println(1)\n"),
        ("", "plain\n"),
    ]


def test_extract_prefers_matching_tag():
    text = (
        "```python\nprint(1)\n```\n"
        "```go\nfmt.Println(1)\n```\n"
    )
    assert extract_code_block(text, "go") == "fmt.Println(1)\n"


def test_extract_alias_tag_matches():
    text = "```golang\nfmt.Println(1)\n```\n"
    assert extract_code_block(text, "go") == "fmt.Println(1)\n"


def test_extract_falls_back_to_untagged():
    text = "Here you go:\n```\nfmt.Println(1)\n```\n"
    assert extract_code_block(text, "go") == "fmt.Println(1)\n"


def test_extract_never_returns_wrong_language():
    text = "```python\nprint(1)\n```\nThanks for asking, happy to help."
    with pytest.raises(NoCodeBlockError):
        extract_code_block(text, "go")


def test_extract_whole_response_when_mostly_code():
    bare = "package main\n\nfunc main() {\n\tfmt.Println(1)\n}\n"
    assert extract_code_block(bare, "go") == bare


def test_extract_rejects_prose():
    prose = (
        "I would be happy to translate that for you.\n"
        "The program mainly prints a greeting to the console.\n"
        "Let me know if you would like the translated version now.\n"
    )
    assert not looks_like_code(prose)
    with pytest.raises(NoCodeBlockError):
        extract_code_block(prose, "go")


def test_unterminated_fence_is_not_a_block():
    text = "```go\nfmt.Println(1)\n"
    assert fenced_blocks(text) == []
