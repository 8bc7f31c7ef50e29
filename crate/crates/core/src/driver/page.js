(() => {
  if (window.__webgym && window.__webgym.version === 1) {
    return true;
  }
  const LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  const BID = "bid";
  const CLICKABLE_TAGS = new Set([
    "a", "button", "input", "select", "textarea", "option", "summary", "label",
  ]);
  const INTERACTIVE_ROLES = new Set([
    "button", "link", "checkbox", "radio", "menuitem", "menuitemcheckbox",
    "menuitemradio", "option", "tab", "switch", "textbox", "combobox",
    "searchbox", "slider", "spinbutton", "treeitem", "gridcell", "listbox",
  ]);
  const TEXT_INPUT_TYPES = new Set([
    "", "text", "email", "password", "search", "tel", "url", "number",
  ]);
  const VALUE_INPUT_TYPES = new Set([
    "date", "time", "datetime-local", "month", "week", "color", "range",
  ]);

  const state = { pass: 0, scopes: {}, owners: {}, kinds: {} };

  function childDocument(el) {
    try {
      return el.contentDocument;
    } catch (e) {
      return null;
    }
  }

  function mark() {
    state.pass += 1;
    state.scopes = {};
    state.owners = {};
    state.kinds = {};
    const entries = [];
    const scopes = [];
    const skipped = [];

    function walk(root, prefix, kind, owner) {
      state.scopes[prefix] = root;
      state.owners[prefix] = owner;
      state.kinds[prefix] = kind;
      scopes.push({
        prefix: prefix,
        kind: kind,
        owner_bid: owner ? owner.getAttribute(BID) : null,
      });
      const pending = [];
      let counter = 0;
      let children = 0;
      const start = kind === "shadow"
        ? Array.from(root.children)
        : (root.documentElement ? [root.documentElement] : []);
      const stack = start.reverse();
      while (stack.length) {
        const el = stack.pop();
        const bid = prefix + String(counter++);
        el.setAttribute(BID, bid);
        entries.push(bid);
        const tag = el.tagName.toLowerCase();
        const isFrame = tag === "iframe" || tag === "frame";
        if (isFrame || el.shadowRoot) {
          if (children >= LETTERS.length) {
            skipped.push({ owner_bid: bid, reason: "too many nested scopes" });
          } else {
            const childPrefix = prefix + LETTERS[children++];
            if (isFrame) {
              const doc = childDocument(el);
              if (doc && doc.documentElement) {
                pending.push([doc, childPrefix, "frame", el]);
              } else {
                skipped.push({ owner_bid: bid, reason: "frame not instrumentable (cross-origin or unloaded)" });
              }
            } else {
              pending.push([el.shadowRoot, childPrefix, "shadow", el]);
            }
          }
        }
        const kids = el.children;
        for (let i = kids.length - 1; i >= 0; i--) {
          stack.push(kids[i]);
        }
      }
      for (const [r, p, k, o] of pending) {
        walk(r, p, k, o);
      }
    }

    walk(document, "", "frame", null);
    return { pass: state.pass, entries: entries, scopes: scopes, skipped: skipped };
  }

  function parseBid(bid) {
    const m = /^([A-Za-z]*)([0-9]+)$/.exec(String(bid));
    return m ? { prefix: m[1], index: m[2] } : null;
  }

  function scopeFor(prefix) {
    if (!(prefix in state.scopes)) {
      throw new Error("unknown-bid");
    }
    for (let i = 1; i <= prefix.length; i++) {
      const p = prefix.slice(0, i);
      const owner = state.owners[p];
      if (!owner) {
        continue;
      }
      const current = state.kinds[p] === "frame" ? childDocument(owner) : owner.shadowRoot;
      if (!owner.isConnected || current !== state.scopes[p]) {
        throw new Error("stale-frame:" + p);
      }
    }
    return state.scopes[prefix];
  }

  function find(bid) {
    const parsed = parseBid(bid);
    if (!parsed) {
      throw new Error("unknown-bid");
    }
    const root = scopeFor(parsed.prefix);
    const el = root.querySelector('[' + BID + '="' + bid + '"]');
    if (!el) {
      throw new Error("unknown-bid");
    }
    return el;
  }

  function check(bid) {
    try {
      find(bid);
      return { ok: true, frames: frameChain(parseBid(bid).prefix) };
    } catch (e) {
      return { ok: false, error: String(e.message) };
    }
  }

  // Prefixes along the chain that enter a real frame (shadow hops excluded).
  function frameChain(prefix) {
    const out = [];
    for (let i = 1; i <= prefix.length; i++) {
      const p = prefix.slice(0, i);
      if (state.kinds[p] === "frame") {
        out.push(p);
      }
    }
    return out;
  }

  function frameOwner(prefix) {
    scopeFor(prefix);
    return state.owners[prefix];
  }

  function frameOffset(prefix) {
    let x = 0;
    let y = 0;
    for (let i = 1; i <= prefix.length; i++) {
      const p = prefix.slice(0, i);
      if (state.kinds[p] !== "frame") {
        continue;
      }
      const o = state.owners[p];
      const r = o.getBoundingClientRect();
      const cs = o.ownerDocument.defaultView.getComputedStyle(o);
      x += r.left + o.clientLeft + (parseFloat(cs.paddingLeft) || 0);
      y += r.top + o.clientTop + (parseFloat(cs.paddingTop) || 0);
    }
    return [x, y];
  }

  function styleOf(el) {
    try {
      return el.ownerDocument.defaultView.getComputedStyle(el);
    } catch (e) {
      return null;
    }
  }

  function parentAcross(el) {
    if (el.parentElement) {
      return el.parentElement;
    }
    const root = el.getRootNode();
    if (root && root.host) {
      return root.host;
    }
    const view = el.ownerDocument && el.ownerDocument.defaultView;
    if (view && view.frameElement) {
      return view.frameElement;
    }
    return null;
  }

  function isDisabled(el) {
    try {
      if (el.matches(":disabled")) {
        return true;
      }
    } catch (e) {}
    return el.getAttribute("aria-disabled") === "true";
  }

  function box(bid) {
    const el = find(bid);
    const r = el.getBoundingClientRect();
    const [ox, oy] = frameOffset(parseBid(bid).prefix);
    return [r.left + ox, r.top + oy, r.right + ox, r.bottom + oy];
  }

  function augment(vw, vh) {
    const hiddenMemo = new Map();
    function hiddenChain(el) {
      if (!el) {
        return false;
      }
      if (hiddenMemo.has(el)) {
        return hiddenMemo.get(el);
      }
      const cs = styleOf(el);
      let hidden = false;
      if (cs && (cs.display === "none" || parseFloat(cs.opacity) <= 0)) {
        hidden = true;
      } else {
        hidden = hiddenChain(parentAcross(el));
      }
      hiddenMemo.set(el, hidden);
      return hidden;
    }
    const out = {};
    for (const prefix of Object.keys(state.scopes)) {
      let root;
      try {
        root = scopeFor(prefix);
      } catch (e) {
        continue;
      }
      const [ox, oy] = frameOffset(prefix);
      const els = root.querySelectorAll("[" + BID + "]");
      for (const el of els) {
        const bid = el.getAttribute(BID);
        const parsed = parseBid(bid);
        if (!parsed || parsed.prefix !== prefix) {
          continue;
        }
        let l = 0, t = 0, r = 0, b = 0;
        let measured = true;
        try {
          const rect = el.getBoundingClientRect();
          l = rect.left + ox;
          t = rect.top + oy;
          r = rect.right + ox;
          b = rect.bottom + oy;
        } catch (e) {
          measured = false;
        }
        if (!measured || !isFinite(l + t + r + b)) {
          l = t = r = b = 0;
        }
        const cs = styleOf(el);
        const positive = r > l && b > t;
        const inViewport = r > 0 && l < vw && b > 0 && t < vh;
        const shown = cs !== null
          && cs.visibility !== "hidden"
          && cs.visibility !== "collapse"
          && !hiddenChain(el);
        const tag = el.tagName.toLowerCase();
        const role = (el.getAttribute("role") || "").trim().toLowerCase();
        const interactive = CLICKABLE_TAGS.has(tag)
          || (cs !== null && cs.cursor === "pointer")
          || INTERACTIVE_ROLES.has(role);
        out[bid] = {
          bid: bid,
          bbox: [l, t, r, b],
          visible: measured && positive && inViewport && shown,
          clickable: interactive && !isDisabled(el),
        };
      }
    }
    return out;
  }

  function focusedBid() {
    let el = document.activeElement;
    let last = null;
    while (el) {
      last = el;
      let next = null;
      const tag = el.tagName ? el.tagName.toLowerCase() : "";
      if (tag === "iframe" || tag === "frame") {
        const doc = childDocument(el);
        next = doc ? doc.activeElement : null;
      } else if (el.shadowRoot && el.shadowRoot.activeElement) {
        next = el.shadowRoot.activeElement;
      }
      el = next;
    }
    return last && last.getAttribute ? last.getAttribute(BID) : null;
  }

  function describe(bid) {
    const el = find(bid);
    const tag = el.tagName.toLowerCase();
    return {
      tag: tag,
      type: tag === "input" ? (el.getAttribute("type") || "text").toLowerCase() : null,
      editable: !!el.isContentEditable,
      disabled: isDisabled(el),
      multiple: !!el.multiple,
      readonly: !!el.readOnly,
    };
  }

  function fire(el, names) {
    for (const name of names) {
      el.dispatchEvent(new Event(name, { bubbles: true }));
    }
  }

  function setValue(bid, value) {
    const el = find(bid);
    el.focus();
    const proto = Object.getPrototypeOf(el);
    const desc = Object.getOwnPropertyDescriptor(proto, "value");
    if (desc && desc.set) {
      desc.set.call(el, value);
    } else {
      el.value = value;
    }
    fire(el, ["input", "change"]);
    return el.value;
  }

  function clear(bid) {
    const el = find(bid);
    el.focus();
    if (el.isContentEditable) {
      el.textContent = "";
      fire(el, ["input"]);
      return true;
    }
    if ("value" in el) {
      el.value = "";
      fire(el, ["input", "change"]);
    }
    return true;
  }

  function focus(bid) {
    const el = find(bid);
    el.focus();
    return true;
  }

  function scrollIntoView(bid) {
    const el = find(bid);
    el.scrollIntoView({ block: "center", inline: "center", behavior: "instant" });
    return box(bid);
  }

  function selectOptions(bid, wanted) {
    const el = find(bid);
    if (el.tagName.toLowerCase() !== "select") {
      throw new Error("element " + bid + " is not a <select> element");
    }
    if (wanted.length > 1 && !el.multiple) {
      throw new Error("element " + bid + " does not accept multiple options");
    }
    const opts = Array.from(el.options);
    const picked = [];
    for (const w of wanted) {
      const o = opts.find((o) => o.value === w)
        || opts.find((o) => o.label.trim() === w.trim())
        || opts.find((o) => o.textContent.trim() === w.trim());
      if (!o) {
        throw new Error("option " + JSON.stringify(w) + " not found in element " + bid);
      }
      picked.push(o);
    }
    for (const o of opts) {
      o.selected = picked.includes(o);
    }
    el.focus();
    fire(el, ["input", "change"]);
    return picked.map((o) => o.value);
  }

  window.__webgym = {
    version: 1,
    TEXT_INPUT_TYPES: Array.from(TEXT_INPUT_TYPES),
    VALUE_INPUT_TYPES: Array.from(VALUE_INPUT_TYPES),
    mark, find, check, frameOwner, box, augment, focusedBid, describe,
    setValue, clear, focus, scrollIntoView, selectOptions,
  };
  return true;
})()
