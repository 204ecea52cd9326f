// Browser bootstrap: read the injected deployment config, restore the
// checkpoint from the URL, and keep rendering the dashboard as resources
// arrive. All logic lives in the DOM-free modules; this file only wires
// them to the page.

import { ApiClient } from "./api.js";
import { DashboardController, checkpointFromUrl, urlWithCheckpoint } from "./state.js";
import type { ViewState } from "./state.js";
import { renderDashboard } from "./views.js";
import type { HelpLink } from "./types.js";

export interface DashboardConfig {
  baseUrl: string;
  token: string;
  studentId: string;
  helpLinks?: HelpLink[];
}

declare global {
  interface Window {
    GRADECAST_DASHBOARD?: DashboardConfig;
  }
}

function mount(root: HTMLElement, config: DashboardConfig): DashboardController {
  const client = new ApiClient({ baseUrl: config.baseUrl, token: config.token });
  const render = (state: ViewState): void => {
    root.innerHTML = renderDashboard(state);
  };
  const controller = new DashboardController(
    client,
    config.studentId,
    checkpointFromUrl(window.location.search),
    render,
    config.helpLinks,
  );

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-checkpoint]");
    if (!(target instanceof HTMLElement) || target.dataset.checkpoint === undefined) {
      return;
    }
    const index = Number(target.dataset.checkpoint);
    window.history.pushState({}, "", urlWithCheckpoint(window.location.search, index as 1 | 2 | 3 | 4));
    void controller.selectCheckpoint(index);
  });
  window.addEventListener("popstate", () => {
    void controller.selectCheckpoint(checkpointFromUrl(window.location.search));
  });

  render(controller.state);
  void controller.start();
  return controller;
}

const root = typeof document === "undefined" ? null : document.getElementById("app");
if (root !== null) {
  const config = window.GRADECAST_DASHBOARD;
  if (config === undefined) {
    root.innerHTML =
      '<p class="panel-error">Missing dashboard configuration: set window.GRADECAST_DASHBOARD ' +
      "with baseUrl, token, and studentId before loading this script.</p>";
  } else {
    mount(root, config);
  }
}
