// Pure rendering helpers: API JSON in, strings/rows out. Keeping these free
// of DOM and network makes the display numbers snapshot-testable against
// recorded responses.

import type { EvidenceJson, ReportJson, UiMessage } from "./types.js";

/** Same display rounding the service uses: halves go up. */
export function roundHalfUp(value: number): number {
  return Math.floor(value + 0.5);
}

/** Grams for display: two decimals, trailing zeros trimmed. */
export function formatGrams(grams: number): string {
  const rounded = Math.round(grams * 100) / 100;
  return String(rounded);
}

export interface ReportRow {
  name: string;
  grams: string;
  kcal: number;
  flags: string[];
}

export function reportRows(report: ReportJson): ReportRow[] {
  return report.estimates.map((estimate) => ({
    name: estimate.ingredient.name,
    grams: formatGrams(estimate.grams),
    kcal: roundHalfUp(estimate.kcal),
    flags: [...estimate.flags].sort(),
  }));
}

export function totalLabel(report: ReportJson): string {
  return `TOTAL: ${roundHalfUp(report.total_kcal)} kcal`;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const FLAG_LABELS: Record<string, string> = {
  assumed_density: "assumed density",
  low_confidence: "low confidence",
  no_match: "no match",
};

function flagBadges(flags: string[]): string {
  return flags
    .map((flag) => `<span class="badge badge-${flag}">${escapeHtml(FLAG_LABELS[flag] ?? flag)}</span>`)
    .join(" ");
}

export function renderEvidencePanel(evidence: EvidenceJson[]): string {
  if (evidence.length === 0) return "";
  const sections = evidence.map((context) => {
    const hits = context.hits
      .map(
        (hit) =>
          `<li><code>${escapeHtml(hit.doc_id)}</code> (${hit.score.toFixed(3)}) ${escapeHtml(hit.text)}</li>`,
      )
      .join("");
    return `<div class="evidence-query"><strong>${escapeHtml(context.query_text)}</strong><ul>${hits}</ul></div>`;
  });
  // collapsed by default: no `open` attribute
  return `<details class="evidence"><summary>Evidence (${evidence.length})</summary>${sections.join("")}</details>`;
}

export function renderReportTable(report: ReportJson, evidence: EvidenceJson[]): string {
  const rows = reportRows(report)
    .map(
      (row) =>
        `<tr><td>${escapeHtml(row.name)}</td><td>${row.grams} g</td>` +
        `<td>${row.kcal} kcal</td><td>${flagBadges(row.flags)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="report"><thead><tr><th>Ingredient</th><th>Amount</th><th>Calories</th><th>Flags</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<p class="total">${escapeHtml(totalLabel(report))}</p>` +
    renderEvidencePanel(evidence)
  );
}

export function bannerForStatus(status: number): string {
  switch (status) {
    case 413:
      return "That image is too large for the server. Try a smaller photo.";
    case 415:
      return "Unsupported file type. Please upload a JPEG, PNG or WebP image.";
    case 502:
      return "The model backend is unreachable right now. Please retry in a moment.";
    case 404:
      return "This conversation has expired. Starting a new session.";
    default:
      return `Something went wrong (status ${status}). Please retry.`;
  }
}

export function renderMessage(message: UiMessage): string {
  const parts: string[] = [];
  if (message.banner) {
    parts.push(`<div class="banner">${escapeHtml(message.banner)}</div>`);
  }
  if (message.imageName) {
    parts.push(`<div class="image-chip">\u{1F4F7} ${escapeHtml(message.imageName)}</div>`);
  }
  if (message.text) {
    parts.push(`<p>${escapeHtml(message.text).replace(/\n/g, "<br>")}</p>`);
  }
  if (message.report) {
    parts.push(renderReportTable(message.report, message.evidence ?? []));
  }
  return `<div class="message message-${message.role}">${parts.join("")}</div>`;
}
