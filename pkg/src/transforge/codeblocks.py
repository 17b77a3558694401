"""Fenced code block handling shared by the pipeline and the agents.

Model responses wrap code in ``` fences with an optional language tag. The
extraction order is fixed: first block tagged for the wanted language, then
the first untagged block, then the whole response when it is mostly code.
A tagged block for the wrong language is never returned.
"""

from __future__ import annotations

import re

from .errors import NoCodeBlockError

FENCE_RE = re.compile(
    r"```[ \t]*([A-Za-z0-9_+#.-]*)[ \t]*\r?\n(.*?)```", re.DOTALL
)

LANG_ALIASES = {
    "py": "python",
    "python3": "python",
    "c++": "cpp",
    "cxx": "cpp",
    "golang": "go",
    "sol": "solidity",
}

# Line shapes that read as code rather than prose.
_CODE_ENDINGS = (";", "{", "}", ")", "(", ":", ",", "]", "[", "=")
_CODE_STARTS = (
    "def ", "class ", "import ", "from ", "return", "if ", "elif ", "else",
    "for ", "while ", "func ", "fn ", "package ", "#include", "public ",
    "private ", "static ", "void ", "int ", "let ", "var ", "const ",
    "struct ", "module ", "use ", "pragma ", "contract ", "try", "except",
    "switch ", "case ", "break", "continue", "print", "//", "#", "/*", "*",
    "@", "}",
)


def normalize_lang(tag: str) -> str:
    tag = tag.strip().lower()
    return LANG_ALIASES.get(tag, tag)


def fenced_blocks(text: str) -> list[tuple[str, str]]:
    """All fenced blocks as (normalized tag, body) pairs, in order."""
    return [
        (normalize_lang(m.group(1)), m.group(2))
        for m in FENCE_RE.finditer(text)
    ]


def line_is_codelike(line: str) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    if stripped.endswith(_CODE_ENDINGS):
        return True
    return stripped.startswith(_CODE_STARTS)


def looks_like_code(text: str, threshold: float = 0.8) -> bool:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return False
    codelike = sum(1 for ln in lines if line_is_codelike(ln))
    return codelike / len(lines) >= threshold


def extract_code_block(response_content: str, target_lang: str) -> str:
    """Pull the translation payload out of a chat response.

    Raises NoCodeBlockError when no fence matches and the raw response does
    not clear the mostly-code bar.
    """
    wanted = normalize_lang(target_lang)
    blocks = fenced_blocks(response_content)
    for tag, body in blocks:
        if tag == wanted:
            return body
    for tag, body in blocks:
        if tag == "":
            return body
    if looks_like_code(response_content):
        return response_content
    raise NoCodeBlockError(
        f"no {target_lang} code block found in response "
        f"({len(blocks)} fenced block(s) present)"
    )
