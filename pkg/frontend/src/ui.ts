/** DOM layer: renders the session state and wires controls to it.
 *
 * All numbers shown (distances, scores, accepted flags) are verbatim from
 * API responses held in the session; this layer only formats them.
 */

import { ApiClient } from "./api.js";
import { ReviewSession } from "./session.js";
import type { QueryResult, SpecialtyNode } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ReviewApp {
  private specialtyTree: SpecialtyNode[] = [];

  private uploadInput!: HTMLInputElement;
  private uploadStatus!: HTMLElement;
  private specialtySelect!: HTMLSelectElement;
  private classSelect!: HTMLSelectElement;
  private subClassSelect!: HTMLSelectElement;
  private thresholdSlider!: HTMLInputElement;
  private thresholdLabel!: HTMLElement;
  private queryButton!: HTMLButtonElement;
  private errorBanner!: HTMLElement;
  private gallery!: HTMLElement;
  private votesPanel!: HTMLElement;
  private draftArea!: HTMLTextAreaElement;
  private physicianInput!: HTMLInputElement;
  private validateButton!: HTMLButtonElement;
  private storedPanel!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: ReviewSession,
    private readonly api: ApiClient,
  ) {
    this.build();
    this.session.onChange(() => this.render());
  }

  async start(): Promise<void> {
    await this.refreshSpecialties();
    this.render();
  }

  private async refreshSpecialties(): Promise<void> {
    try {
      this.specialtyTree = await this.api.specialties();
    } catch {
      this.specialtyTree = [];
    }
    this.fillSpecialtyOptions();
  }

  private build(): void {
    this.root.replaceChildren();

    const header = el("header");
    header.append(el("h1", "", "Image annotation review"));
    this.errorBanner = el("div", "error-banner hidden");
    header.append(this.errorBanner);
    this.root.append(header);

    // upload + filter controls
    const controls = el("section", "controls");
    const uploadBox = el("div", "control-group");
    uploadBox.append(el("label", "", "New image"));
    this.uploadInput = el("input");
    this.uploadInput.type = "file";
    this.uploadInput.accept = ".pgm,.png,image/png";
    this.uploadInput.addEventListener("change", () => void this.onUpload());
    this.uploadStatus = el("span", "upload-status");
    uploadBox.append(this.uploadInput, this.uploadStatus);
    controls.append(uploadBox);

    const filterBox = el("div", "control-group");
    filterBox.append(el("label", "", "Specialty / class / sub-class"));
    this.specialtySelect = el("select");
    this.classSelect = el("select");
    this.subClassSelect = el("select");
    this.specialtySelect.addEventListener("change", () => this.onFilterChange(true));
    this.classSelect.addEventListener("change", () => this.onFilterChange(false));
    this.subClassSelect.addEventListener("change", () => this.onFilterChange(false));
    filterBox.append(this.specialtySelect, this.classSelect, this.subClassSelect);
    controls.append(filterBox);

    const thresholdBox = el("div", "control-group");
    this.thresholdLabel = el("label", "", `Acceptance threshold: ${this.session.threshold}`);
    this.thresholdSlider = el("input");
    this.thresholdSlider.type = "range";
    this.thresholdSlider.min = "0";
    this.thresholdSlider.max = "32";
    this.thresholdSlider.step = "0.5";
    this.thresholdSlider.value = String(this.session.threshold);
    this.thresholdSlider.addEventListener("input", () => {
      this.thresholdLabel.textContent = `Acceptance threshold: ${this.thresholdSlider.value}`;
    });
    this.thresholdSlider.addEventListener("change", () => {
      void this.session.setThreshold(Number(this.thresholdSlider.value));
    });
    thresholdBox.append(this.thresholdLabel, this.thresholdSlider);
    controls.append(thresholdBox);

    this.queryButton = el("button", "", "Find similar images");
    this.queryButton.addEventListener("click", () => void this.session.runQuery());
    controls.append(this.queryButton);
    this.root.append(controls);

    // results + review panes
    const main = el("main");
    this.gallery = el("section", "gallery");
    main.append(this.gallery);

    const review = el("section", "review");
    this.votesPanel = el("div", "votes");
    review.append(el("h2", "", "Suggested keywords"), this.votesPanel);

    review.append(el("h2", "", "Draft annotation"));
    this.draftArea = el("textarea");
    this.draftArea.rows = 6;
    this.draftArea.placeholder = "one keyword per line";
    this.draftArea.addEventListener("input", () => {
      this.session.setDraft(this.draftArea.value.split("\n"));
    });
    review.append(this.draftArea);

    this.physicianInput = el("input");
    this.physicianInput.placeholder = "physician id";
    this.physicianInput.addEventListener("input", () => this.render());
    this.validateButton = el("button", "", "Validate annotation");
    this.validateButton.addEventListener("click", () => void this.onValidate());
    this.storedPanel = el("div", "stored hidden");
    review.append(this.physicianInput, this.validateButton, this.storedPanel);
    main.append(review);
    this.root.append(main);
  }

  private async onUpload(): Promise<void> {
    const file = this.uploadInput.files?.[0];
    if (!file) return;
    const ok = await this.session.upload(file, file.name);
    if (ok && this.session.specialty !== null) {
      await this.session.runQuery();
    }
  }

  private onFilterChange(resetClasses: boolean): void {
    if (resetClasses) this.fillClassOptions();
    const specialty = this.specialtySelect.value || null;
    const className = this.classSelect.value || null;
    const subClass = this.subClassSelect.value || null;
    this.session.setFilter(specialty, className, subClass);
    if (this.session.hasQueried) void this.session.runQuery();
  }

  private fillSpecialtyOptions(): void {
    this.specialtySelect.replaceChildren(new Option("— specialty —", ""));
    for (const spec of this.specialtyTree) {
      this.specialtySelect.append(new Option(spec.name, spec.name));
    }
    this.fillClassOptions();
  }

  private fillClassOptions(): void {
    const spec = this.specialtyTree.find((s) => s.name === this.specialtySelect.value);
    this.classSelect.replaceChildren(new Option("any class", ""));
    this.subClassSelect.replaceChildren(new Option("any sub-class", ""));
    for (const cls of spec?.classes ?? []) {
      this.classSelect.append(new Option(cls.name, cls.name));
    }
    const cls = spec?.classes.find((c) => c.name === this.classSelect.value);
    for (const sub of cls?.sub_classes ?? []) {
      this.subClassSelect.append(new Option(sub, sub));
    }
  }

  private async onValidate(): Promise<void> {
    const physician = this.physicianInput.value.trim() || "anonymous";
    const record = await this.session.validate(physician);
    if (record !== null) {
      await this.refreshSpecialties();
    }
  }

  private resultCard(result: QueryResult): HTMLElement {
    const card = el("div", "card" + (this.session.selection === result.image_id ? " selected" : ""));
    const img = el("img");
    img.src = this.api.rawUrl(result.image_id);
    img.alt = result.image_id;
    card.append(img);

    const badge = el(
      "span",
      result.accepted ? "badge accepted" : "badge rejected",
      result.accepted ? "accepted" : "rejected",
    );
    const title = el("div", "card-title");
    title.append(el("strong", "", result.image_id), badge);
    card.append(title);
    card.append(el("div", "distance", `distance ${result.distance.toFixed(3)}`));

    for (const record of result.annotations) {
      const line = `${record.specialty} / ${record.class_name} / ${record.sub_class} — ${record.keywords.join("; ")}`;
      card.append(el("div", "annotation", line));
    }
    card.addEventListener("click", () => this.session.select(result.image_id));
    return card;
  }

  private render(): void {
    const s = this.session;

    if (s.lastError !== null) {
      this.errorBanner.classList.remove("hidden");
      this.errorBanner.replaceChildren(
        el("span", "", `${s.lastError.code}: ${s.lastError.message}`),
      );
      const dismiss = el("button", "dismiss", "dismiss");
      dismiss.addEventListener("click", () => s.dismissError());
      this.errorBanner.append(dismiss);
    } else {
      this.errorBanner.classList.add("hidden");
    }

    this.uploadStatus.textContent =
      s.imageId === null
        ? ""
        : s.duplicateOf !== null
          ? `${s.imageId} (already in corpus)`
          : `${s.imageId} — ${s.pointCount} feature points`;

    this.queryButton.disabled = !s.canQuery;

    this.gallery.replaceChildren();
    if (s.emptyCorpus) {
      this.gallery.append(
        el(
          "div",
          "empty-state",
          "No corpus images match this specialty and class yet. Validated annotations will appear here for future queries.",
        ),
      );
    } else {
      for (const result of s.results) this.gallery.append(this.resultCard(result));
    }

    this.votesPanel.replaceChildren();
    for (const vote of s.votes) {
      this.votesPanel.append(
        el("div", "vote", `${vote.score.toFixed(3)}  ${vote.keyword} (${vote.supporters.join(", ")})`),
      );
    }

    const draftText = s.draftKeywords.join("\n");
    if (this.draftArea.value !== draftText && document.activeElement !== this.draftArea) {
      this.draftArea.value = draftText;
    }
    this.validateButton.disabled = !s.canValidate;

    if (s.storedRecord !== null) {
      this.storedPanel.classList.remove("hidden");
      this.storedPanel.replaceChildren(
        el("h3", "", "Stored annotation"),
        el(
          "div",
          "",
          `${s.storedRecord.image_id}: ${s.storedRecord.keywords.join("; ")} (${s.storedRecord.physician_id}, ${s.storedRecord.created_at})`,
        ),
      );
      const again = el("button", "", "Annotate another");
      again.addEventListener("click", () => {
        this.session.reset();
        this.uploadInput.value = "";
      });
      this.storedPanel.append(again);
    } else {
      this.storedPanel.classList.add("hidden");
      this.storedPanel.replaceChildren();
    }
  }
}
