"""Error-recovering HTML document tree plus grounded interactive-element extraction.

Parsing is pure Python on top of the stdlib tokenizer: malformed input never
raises, recovery always yields a well-formed tree (implicit html/head/body,
void elements, pop-until-match end tags), and element nodes carry a stable
pre-order document index. Trees are immutable after parse and safe to share.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

logger = logging.getLogger(__name__)

VOID_TAGS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
}

# Tags whose content goes into an implicit <head> when seen before <body>.
HEAD_TAGS = {"base", "link", "meta", "title", "style"}

# Subtrees that never contribute visible text.
EXCLUDED_SUBTREE_TAGS = {"script", "style", "noscript", "template"}

# Start tags that implicitly close an open <p>.
_P_CLOSERS = {
    "address", "article", "aside", "blockquote", "div", "dl", "fieldset",
    "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header",
    "hr", "main", "nav", "ol", "p", "pre", "section", "table", "ul",
}

# Start tag -> open tags it implicitly closes (nearest enclosing occurrence).
_AUTOCLOSE = {
    "li": {"li"},
    "dt": {"dt", "dd"},
    "dd": {"dt", "dd"},
    "tr": {"tr", "td", "th"},
    "td": {"td", "th"},
    "th": {"td", "th"},
    "option": {"option"},
    "optgroup": {"option", "optgroup"},
    "thead": {"tr", "td", "th"},
    "tbody": {"tr", "td", "th", "thead"},
    "tfoot": {"tr", "td", "th", "tbody"},
}

_WS_RE = re.compile(r"\s+")


def collapse_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WS_RE.sub(" ", text).strip()


@dataclass(eq=False)
class TextNode:
    text: str
    parent: "Element | None" = field(default=None, repr=False)


@dataclass(eq=False)
class Element:
    tag: str
    attrs: dict[str, str]
    parent: "Element | None" = field(default=None, repr=False)
    children: list["Element | TextNode"] = field(default_factory=list)
    doc_order: int = -1

    def element_children(self) -> list["Element"]:
        return [c for c in self.children if isinstance(c, Element)]

    def direct_text(self) -> str:
        return collapse_ws("".join(c.text for c in self.children if isinstance(c, TextNode)))


def _is_hidden(el: Element) -> bool:
    """Static visibility check for a single element (not its ancestors)."""
    if "hidden" in el.attrs:
        return True
    if el.attrs.get("aria-hidden", "").strip().lower() == "true":
        return True
    style = re.sub(r"\s+", "", el.attrs.get("style", "")).lower()
    return "display:none" in style or "visibility:hidden" in style


class _TreeBuilder(HTMLParser):
    """Builds an element tree, synthesizing html/head/body and never raising."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.document = Element("#document", {})
        self._stack: list[Element] = []

    # -- structural helpers -------------------------------------------------

    def _find_child(self, parent: Element, tag: str) -> Element | None:
        for child in parent.element_children():
            if child.tag == tag:
                return child
        return None

    def _open(self, tag: str, attrs: dict[str, str]) -> Element:
        parent = self._stack[-1] if self._stack else self.document
        node = Element(tag, attrs, parent=parent)
        parent.children.append(node)
        self._stack.append(node)
        return node

    def _reopen_or_open(self, tag: str) -> None:
        # html/head/body are singletons; trailing content re-enters the
        # existing element instead of spawning a duplicate.
        parent = self._stack[-1] if self._stack else self.document
        existing = self._find_child(parent, tag)
        if existing is not None:
            self._stack.append(existing)
        else:
            self._open(tag, {})

    def _implicit_tags(self, tag: str | None) -> None:
        while True:
            open_tags = [n.tag for n in self._stack]
            if not open_tags and tag != "html":
                self._reopen_or_open("html")
            elif open_tags == ["html"] and tag not in ("head", "body"):
                if tag in HEAD_TAGS:
                    self._reopen_or_open("head")
                else:
                    self._reopen_or_open("body")
            elif open_tags == ["html", "head"] and tag is not None and tag not in HEAD_TAGS:
                self._stack.pop()
                self._reopen_or_open("body")
            else:
                break

    def _autoclose_for(self, tag: str) -> None:
        closers = set(_AUTOCLOSE.get(tag, ()))
        if tag in _P_CLOSERS:
            closers.add("p")
        if not closers:
            return
        for i in range(len(self._stack) - 1, -1, -1):
            open_tag = self._stack[i].tag
            if open_tag in closers:
                del self._stack[i:]
                return
            if open_tag in ("html", "head", "body", "table", "ul", "ol", "dl", "select"):
                return

    # -- tokenizer callbacks -------------------------------------------------

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        tag = tag.lower()
        attr_map: dict[str, str] = {}
        for name, value in attrs:
            name = name.lower()
            if name not in attr_map:  # first occurrence wins
                attr_map[name] = value if value is not None else ""
        if tag in ("html", "head", "body"):
            self._enter_structural(tag, attr_map)
            return
        self._implicit_tags(tag)
        self._autoclose_for(tag)
        self._open(tag, attr_map)
        if tag in VOID_TAGS:
            self._stack.pop()

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        tag = tag.lower()
        if tag in ("html", "head", "body"):
            self.handle_starttag(tag, attrs)
            return
        self.handle_starttag(tag, attrs)
        if tag not in VOID_TAGS and self._stack and self._stack[-1].tag == tag:
            self._stack.pop()

    def _enter_structural(self, tag: str, attr_map: dict[str, str]) -> None:
        if tag == "html":
            html = self._find_child(self.document, "html")
            if html is None:
                self._stack.clear()
                self._open("html", attr_map)
            else:
                html.attrs.update({k: v for k, v in attr_map.items() if k not in html.attrs})
                if html not in self._stack:
                    self._stack = [html]
            return
        self._implicit_tags(tag)  # guarantees html is open
        html = self._stack[0]
        existing = self._find_child(html, tag)
        if existing is None:
            if tag == "body" and self._stack[-1].tag == "head":
                self._stack.pop()
            self._stack = [html]
            self._open(tag, attr_map)
        else:
            existing.attrs.update({k: v for k, v in attr_map.items() if k not in existing.attrs})
            self._stack = [html, existing]

    def handle_endtag(self, tag: str) -> None:
        tag = tag.lower()
        if tag in VOID_TAGS:
            return
        for i in range(len(self._stack) - 1, -1, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # No matching open element: ignore the stray end tag.

    def handle_data(self, data: str) -> None:
        if not data:
            return
        if data.isspace():
            if not self._stack or self._stack[-1].tag in ("html", "head"):
                return
        else:
            self._implicit_tags(None)
        parent = self._stack[-1]
        parent.children.append(TextNode(data, parent=parent))

    def error(self, message: str) -> None:  # pragma: no cover - py<3.10 compat hook
        logger.debug("tokenizer recovery: %s", message)

    # -- finalization ---------------------------------------------------------

    def finish(self) -> Element:
        self.close()
        html = self._find_child(self.document, "html")
        if html is None:
            html = Element("html", {}, parent=self.document)
            self.document.children.append(html)
        for tag in ("head", "body"):
            if self._find_child(html, tag) is None:
                node = Element(tag, {}, parent=html)
                if tag == "head":
                    html.children.insert(0, node)
                else:
                    html.children.append(node)
        return self.document


class DomTree:
    """Immutable parsed document; `document` is a synthetic root above <html>."""

    def __init__(self, document: Element):
        self.document = document
        order = 0
        for el in _preorder(self.html):
            el.doc_order = order
            order += 1
        self._element_count = order
        self._id_counts: dict[str, int] = {}
        for el in self.iter_elements():
            if "id" in el.attrs:
                self._id_counts[el.attrs["id"]] = self._id_counts.get(el.attrs["id"], 0) + 1
        setattr(document, _TREE_CACHE_ATTR, self)

    @property
    def html(self) -> Element:
        for child in self.document.element_children():
            if child.tag == "html":
                return child
        raise AssertionError("parse always yields an html element")

    @property
    def body(self) -> Element:
        for child in self.html.element_children():
            if child.tag == "body":
                return child
        raise AssertionError("parse always yields a body element")

    @property
    def head(self) -> Element:
        for child in self.html.element_children():
            if child.tag == "head":
                return child
        raise AssertionError("parse always yields a head element")

    def iter_elements(self):
        yield from _preorder(self.html)

    @property
    def element_count(self) -> int:
        return self._element_count

    def id_is_unique(self, value: str) -> bool:
        return self._id_counts.get(value, 0) == 1

    def find_by_id(self, value: str) -> Element | None:
        for el in self.iter_elements():
            if el.attrs.get("id") == value:
                return el
        return None


def _preorder(root: Element):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.element_children()))


def parse_html(html: bytes | str) -> DomTree:
    """Parse HTML with error recovery; never raises, empty input yields a skeleton."""
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    builder = _TreeBuilder()
    builder.feed(html)
    return DomTree(builder.finish())


# ---------------------------------------------------------------------------
# Visible text
# ---------------------------------------------------------------------------

def visible_text_of(node: Element, *, fallbacks: bool = True) -> str:
    """Visible text of a subtree: descendant text nodes minus script/style/
    noscript/template and statically hidden subtrees, whitespace collapsed.

    When the result is empty and fallbacks are enabled, falls back to
    aria-label, then title, then the alt of a sole img child, then the value
    attribute of inputs. Icon-only controls legitimately return "".
    """
    parts: list[str] = []
    _collect_visible_text(node, parts)
    text = collapse_ws("".join(parts))
    if text or not fallbacks:
        return text
    for attr in ("aria-label", "title"):
        value = collapse_ws(node.attrs.get(attr, ""))
        if value:
            return value
    children = node.element_children()
    if len(children) == 1 and children[0].tag == "img":
        alt = collapse_ws(children[0].attrs.get("alt", ""))
        if alt:
            return alt
    if node.tag == "input":
        return collapse_ws(node.attrs.get("value", ""))
    return ""


def _collect_visible_text(el: Element, parts: list[str]) -> None:
    if el.tag in EXCLUDED_SUBTREE_TAGS or _is_hidden(el):
        return
    for child in el.children:
        if isinstance(child, TextNode):
            parts.append(child.text)
        else:
            _collect_visible_text(child, parts)


# ---------------------------------------------------------------------------
# XPath generation and resolution
# ---------------------------------------------------------------------------

XPATH_MODES = ("stable_then_abs", "absolute")

_ID_XPATH_RE = re.compile(r"^//\*\[@id=(['\"])(.*)\1\]$", re.DOTALL)
_STEP_RE = re.compile(r"^([a-zA-Z][a-zA-Z0-9-]*)(?:\[(\d+)\])?$")


class MalformedXPathError(ValueError):
    """Locator string outside the two supported xpath forms."""


def generate_xpath(node: Element, mode: str = "stable_then_abs") -> str:
    """Deterministic locator: unique quote-free id -> //*[@id='..'], else the
    absolute /html[1]/... path with 1-based per-tag sibling indices."""
    if mode not in XPATH_MODES:
        raise ValueError(f"unknown xpath mode: {mode!r}")
    if mode == "stable_then_abs":
        node_id = node.attrs.get("id", "")
        if node_id and "'" not in node_id and '"' not in node_id:
            if _document_of(node).id_is_unique(node_id):
                return f"//*[@id='{node_id}']"
    return _absolute_xpath(node)


def _absolute_xpath(node: Element) -> str:
    steps: list[str] = []
    current: Element | None = node
    while current is not None and current.tag != "#document":
        parent = current.parent
        position = 1
        if parent is not None:
            for sibling in parent.element_children():
                if sibling is current:
                    break
                if sibling.tag == current.tag:
                    position += 1
        steps.append(f"{current.tag}[{position}]")
        current = parent
    return "/" + "/".join(reversed(steps))


_TREE_CACHE_ATTR = "_guideweb_tree"


def _document_of(node: Element) -> DomTree:
    current = node
    while current.parent is not None:
        current = current.parent
    tree = getattr(current, _TREE_CACHE_ATTR, None)
    if tree is None:
        tree = DomTree.__new__(DomTree)
        tree.document = current
        tree._id_counts = {}
        for el in _preorder_from_document(current):
            if "id" in el.attrs:
                tree._id_counts[el.attrs["id"]] = tree._id_counts.get(el.attrs["id"], 0) + 1
        setattr(current, _TREE_CACHE_ATTR, tree)
    return tree


def _preorder_from_document(document: Element):
    for child in document.element_children():
        yield from _preorder(child)


def resolve_xpath(dom: DomTree, xpath: str) -> Element | None:
    """Resolve one of the two generated locator forms; None when unmatched."""
    xpath = xpath.strip()
    match = _ID_XPATH_RE.match(xpath)
    if match:
        return dom.find_by_id(match.group(2))
    if not xpath.startswith("/") or xpath.startswith("//"):
        raise MalformedXPathError(f"unsupported locator: {xpath!r}")
    current = dom.document
    for raw_step in xpath[1:].split("/"):
        step = _STEP_RE.match(raw_step)
        if step is None:
            raise MalformedXPathError(f"unsupported locator step: {raw_step!r}")
        tag = step.group(1).lower()
        index = int(step.group(2)) if step.group(2) else 1
        matches = [c for c in current.element_children() if c.tag == tag]
        if index < 1 or index > len(matches):
            return None
        current = matches[index - 1]
    return current


# ---------------------------------------------------------------------------
# Interactive element extraction
# ---------------------------------------------------------------------------

INTERACTIVE_TAGS = frozenset({"a", "button", "select", "textarea", "summary"})
INTERACTIVE_ROLES = frozenset({
    "button", "link", "tab", "menuitem", "checkbox", "switch", "searchbox", "combobox",
})
SALIENT_ATTRS = ("id", "role", "type", "href", "aria-label")


@dataclass(frozen=True)
class ExtractionRules:
    """Static interactive predicate: tag set, input type!=hidden, role set,
    onclick, or non-negative tabindex."""
    interactive_tags: frozenset[str] = INTERACTIVE_TAGS
    interactive_roles: frozenset[str] = INTERACTIVE_ROLES
    max_elements: int = 2000
    xpath_mode: str = "stable_then_abs"


@dataclass(frozen=True)
class InteractiveElement:
    tag: str
    visible_text: str
    xpath: str
    attrs: dict[str, str]
    doc_order: int

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "visible_text": self.visible_text,
            "xpath": self.xpath,
            "attrs": {k: self.attrs[k] for k in SALIENT_ATTRS if k in self.attrs},
            "doc_order": self.doc_order,
        }


@dataclass
class ElementIndex:
    elements: list[InteractiveElement]
    source_site: str = ""

    def xpaths(self) -> set[str]:
        return {e.xpath for e in self.elements}

    def to_json(self) -> str:
        payload = {
            "source_site": self.source_site,
            "elements": [e.to_dict() for e in self.elements],
        }
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _matches_predicate(el: Element, rules: ExtractionRules) -> bool:
    if el.tag in rules.interactive_tags:
        return True
    if el.tag == "input" and el.attrs.get("type", "").strip().lower() != "hidden":
        return True
    role_tokens = el.attrs.get("role", "").strip().lower().split()
    if any(token in rules.interactive_roles for token in role_tokens):
        return True
    if "onclick" in el.attrs:
        return True
    tabindex = el.attrs.get("tabindex", "").strip()
    try:
        return int(tabindex) >= 0
    except ValueError:
        return False


def extract_interactive_elements(
    dom: DomTree,
    rules: ExtractionRules | None = None,
    source_site: str = "",
) -> ElementIndex:
    """All visible elements matching the predicate, in document order, grounded
    by xpath. Duplicate xpaths keep the first occurrence; capped at
    rules.max_elements."""
    rules = rules or ExtractionRules()
    elements: list[InteractiveElement] = []
    seen_xpaths: set[str] = set()
    stack: list[Element] = [dom.html]
    while stack:
        el = stack.pop()
        if el.tag in EXCLUDED_SUBTREE_TAGS or _is_hidden(el):
            continue  # hidden subtrees are skipped wholesale
        if _matches_predicate(el, rules):
            xpath = generate_xpath(el, rules.xpath_mode)
            if xpath in seen_xpaths:
                logger.warning("duplicate xpath %s dropped from index", xpath)
            else:
                seen_xpaths.add(xpath)
                elements.append(
                    InteractiveElement(
                        tag=el.tag,
                        visible_text=visible_text_of(el),
                        xpath=xpath,
                        attrs={k: el.attrs[k] for k in SALIENT_ATTRS if k in el.attrs},
                        doc_order=el.doc_order,
                    )
                )
                if len(elements) >= rules.max_elements:
                    break
        stack.extend(reversed(el.element_children()))
    return ElementIndex(elements=elements, source_site=source_site)


# ---------------------------------------------------------------------------
# Blocks and headings
# ---------------------------------------------------------------------------

BLOCK_TAGS = frozenset({
    "p", "li", "h1", "h2", "h3", "h4", "h5", "h6",
    "td", "th", "blockquote", "figcaption", "dd", "dt",
})

_HEADING_LEVEL = {f"h{i}": i for i in range(1, 7)}


def extract_text_blocks(dom: DomTree) -> list[str]:
    """Document-order visible text of block-level nodes; leaf div/section with
    direct text also count; empty strings omitted."""
    blocks: list[str] = []
    for el, _ in _visible_walk(dom):
        if el.tag in BLOCK_TAGS:
            text = visible_text_of(el, fallbacks=False)
            if text:
                blocks.append(text)
        elif el.tag in ("div", "section") and not el.element_children():
            text = visible_text_of(el, fallbacks=False)
            if text:
                blocks.append(text)
    return blocks


def extract_headings(dom: DomTree) -> list[tuple[int, str]]:
    """(level, visible text) of h1-h6 in document order; hidden and empty omitted."""
    headings: list[tuple[int, str]] = []
    for el, _ in _visible_walk(dom):
        level = _HEADING_LEVEL.get(el.tag)
        if level is not None:
            text = visible_text_of(el, fallbacks=False)
            if text:
                headings.append((level, text))
    return headings


def _visible_walk(dom: DomTree):
    """Pre-order (element, depth) over subtrees that are not statically hidden."""
    stack: list[tuple[Element, int]] = [(dom.html, 0)]
    while stack:
        el, depth = stack.pop()
        if el.tag in EXCLUDED_SUBTREE_TAGS or _is_hidden(el):
            continue
        yield el, depth
        for child in reversed(el.element_children()):
            stack.append((child, depth + 1))


def page_text(dom: DomTree) -> str:
    """Whitespace-normalized visible text of the whole page body."""
    return visible_text_of(dom.body, fallbacks=False)
