// DOM builders for the rating screens. Scores are radio groups, so entry is
// restricted to 1..7 by construction; the submit button enables only once
// every dimension of every form in the group has a value.

import { RatingForm } from "./ratings.js";
import { DIMENSIONS, Dimension, NEUTRAL } from "./schema.js";
import { SCALE_VALUES } from "./ratings.js";

const DIMENSION_LABELS: Record<Dimension, string> = {
  likability: "Liking (personal preference)",
  aesthetic_pleasantness: "Aesthetic pleasantness",
  artistic_value: "Artistic value",
};

export function likertRow(
  groupName: string,
  dimension: Dimension,
  form: RatingForm,
  onChange: () => void,
): HTMLElement {
  const row = document.createElement("div");
  row.className = "likert-row";
  const label = document.createElement("div");
  label.className = "likert-label";
  label.textContent = DIMENSION_LABELS[dimension];
  row.appendChild(label);

  const options = document.createElement("div");
  options.className = "likert-options";
  for (const value of SCALE_VALUES) {
    const wrap = document.createElement("label");
    wrap.className = "likert-option";
    const input = document.createElement("input");
    input.type = "radio";
    input.name = `${groupName}-${dimension}`;
    input.value = String(value);
    input.addEventListener("change", () => {
      form.setScore(dimension, value);
      onChange();
    });
    const caption = document.createElement("span");
    caption.textContent = value === NEUTRAL ? `${value} (neutral)` : String(value);
    wrap.appendChild(input);
    wrap.appendChild(caption);
    options.appendChild(wrap);
  }
  row.appendChild(options);
  return row;
}

export function ratingPanel(
  title: string,
  groupName: string,
  form: RatingForm,
  onChange: () => void,
): HTMLElement {
  const panel = document.createElement("section");
  panel.className = "rating-panel";
  const heading = document.createElement("h3");
  heading.textContent = title;
  panel.appendChild(heading);
  for (const dimension of DIMENSIONS) {
    panel.appendChild(likertRow(groupName, dimension, form, onChange));
  }
  return panel;
}

export interface SubmitGate {
  button: HTMLButtonElement;
  refresh: () => void;
}

export function submitGate(
  label: string,
  forms: RatingForm[],
  onSubmit: () => void,
): SubmitGate {
  const button = document.createElement("button");
  button.type = "button";
  button.className = "submit-button";
  button.textContent = label;
  const refresh = () => {
    button.disabled = !forms.every((f) => f.isComplete());
  };
  button.addEventListener("click", () => {
    if (forms.every((f) => f.isComplete())) onSubmit();
  });
  refresh();
  return { button, refresh };
}
