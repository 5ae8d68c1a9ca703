// Review queue: paged listing of inspections waiting for a human label.
// The server's queue endpoint is authoritative for membership and
// ordering; this module only fetches, pages, and renders.

import { UnreachableError, type ConsoleApi } from "./api.js";
import type { InspectionRecord } from "./types.js";

export type QueueState = {
  items: InspectionRecord[];
  total: number;
  page: number;
  pageSize: number;
  loading: boolean;
  // Set when the service cannot be reached; the view shows a retry
  // banner instead of pretending the listing is current.
  unreachable: boolean;
};

export type QueueHandlers = {
  onOpen: (id: string) => void;
  onPage: (page: number) => void;
  onRetry: () => void;
};

export class QueueController {
  readonly state: QueueState;
  private readonly api: ConsoleApi;

  constructor(api: ConsoleApi, pageSize = 20) {
    this.api = api;
    this.state = {
      items: [],
      total: 0,
      page: 0,
      pageSize,
      loading: false,
      unreachable: false,
    };
  }

  get pageCount(): number {
    return Math.max(1, Math.ceil(this.state.total / this.state.pageSize));
  }

  async load(page = this.state.page): Promise<void> {
    this.state.loading = true;
    try {
      const listing = await this.api.getQueue(page, this.state.pageSize);
      this.state.items = listing.items;
      this.state.total = listing.total;
      this.state.page = listing.page;
      this.state.pageSize = listing.page_size;
      this.state.unreachable = false;
    } catch (err) {
      if (err instanceof UnreachableError) {
        this.state.unreachable = true;
        return;
      }
      throw err;
    } finally {
      this.state.loading = false;
    }
  }

  // Optimistic removal while a label submission is in flight. Returns a
  // snapshot so the caller can put the view back if the submission
  // fails and the server cannot be re-read.
  removeItem(id: string): InspectionRecord[] {
    const snapshot = [...this.state.items];
    this.state.items = this.state.items.filter((item) => item.id !== id);
    if (this.state.items.length < snapshot.length) {
      this.state.total -= 1;
    }
    return snapshot;
  }

  restoreItems(snapshot: InspectionRecord[]): void {
    this.state.total += snapshot.length - this.state.items.length;
    this.state.items = snapshot;
  }
}

function describeAge(submittedAt: number, nowSeconds: number): string {
  const age = Math.max(0, nowSeconds - submittedAt);
  if (age < 60) return `${Math.round(age)}s`;
  if (age < 3600) return `${Math.round(age / 60)}m`;
  return `${(age / 3600).toFixed(1)}h`;
}

export function renderQueue(
  container: Element,
  state: QueueState,
  handlers: QueueHandlers,
  nowSeconds: number = Date.now() / 1000,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const root = doc.createElement("section");
  root.className = "queue";

  if (state.unreachable) {
    const banner = doc.createElement("div");
    banner.className = "retry-banner";
    banner.appendChild(
      doc.createTextNode("Service unreachable; the listing may be stale. "),
    );
    const retry = doc.createElement("button");
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => handlers.onRetry());
    banner.appendChild(retry);
    root.appendChild(banner);
  }

  if (state.items.length === 0 && !state.unreachable) {
    const empty = doc.createElement("p");
    empty.className = "queue-empty";
    empty.textContent = "No inspections are waiting for review.";
    root.appendChild(empty);
  } else {
    const list = doc.createElement("ul");
    list.className = "queue-items";
    for (const item of state.items) {
      list.appendChild(renderItem(doc, item, handlers, nowSeconds));
    }
    root.appendChild(list);
  }

  root.appendChild(renderPager(doc, state, handlers));
  container.appendChild(root);
}

function renderItem(
  doc: Document,
  item: InspectionRecord,
  handlers: QueueHandlers,
  nowSeconds: number,
): Element {
  const urgent = item.decision === "urgent_clean";
  const li = doc.createElement("li");
  li.className = urgent ? "queue-item urgent" : "queue-item";
  li.setAttribute("data-id", item.id);

  const cells: Array<[string, string]> = [
    ["item-id", item.id],
    ["item-status", item.status],
    ["item-prediction", item.prediction ? item.prediction.class_name : "-"],
    [
      "item-confidence",
      item.prediction
        ? `${(item.prediction.confidence * 100).toFixed(0)}%`
        : "-",
    ],
    ["item-triage", item.decision ?? "-"],
    ["item-age", describeAge(item.submitted_at, nowSeconds)],
  ];
  for (const [cls, text] of cells) {
    const span = doc.createElement("span");
    span.className = cls;
    span.textContent = text;
    li.appendChild(span);
  }
  if (urgent) {
    const badge = doc.createElement("span");
    badge.className = "urgent-badge";
    badge.textContent = "URGENT";
    li.appendChild(badge);
  }

  const open = doc.createElement("button");
  open.className = "open";
  open.textContent = "Review";
  open.addEventListener("click", () => handlers.onOpen(item.id));
  li.appendChild(open);
  return li;
}

function renderPager(
  doc: Document,
  state: QueueState,
  handlers: QueueHandlers,
): Element {
  const pageCount = Math.max(1, Math.ceil(state.total / state.pageSize));
  const nav = doc.createElement("nav");
  nav.className = "pager";

  const prev = doc.createElement("button");
  prev.className = "prev";
  prev.textContent = "Previous";
  prev.disabled = state.page === 0;
  prev.addEventListener("click", () => handlers.onPage(state.page - 1));

  const label = doc.createElement("span");
  label.className = "page-label";
  label.textContent = `page ${state.page + 1} of ${pageCount} (${state.total} waiting)`;

  const next = doc.createElement("button");
  next.className = "next";
  next.textContent = "Next";
  next.disabled = state.page >= pageCount - 1;
  next.addEventListener("click", () => handlers.onPage(state.page + 1));

  nav.appendChild(prev);
  nav.appendChild(label);
  nav.appendChild(next);
  return nav;
}
