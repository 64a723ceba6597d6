// Bootstrap: status snapshot + event stream -> state -> dashboard.

import { ApiClient, connectEvents } from "./api.js";
import { Dashboard } from "./dashboard.js";
import { applyEvent, applyStatus, initialState, setConnected } from "./state.js";

const POLL_INTERVAL_MS = 2000;

function main(): void {
  const api = new ApiClient("");
  const dashboard = new Dashboard(document, api);
  let state = initialState();

  const push = (): void => dashboard.render(state);

  connectEvents("", {
    onEvent: (event) => {
      state = applyEvent(state, event);
      push();
    },
    onConnected: () => {
      state = setConnected(state, true);
      push();
    },
    onDisconnected: () => {
      state = setConnected(state, false);
      push();
    },
  });

  // Periodic snapshot keeps elapsed/limits fresh and reconciles after a
  // reconnect; events carry the within-a-second updates.
  const poll = (): void => {
    api
      .status()
      .then((snapshot) => {
        state = applyStatus(state, snapshot);
        push();
      })
      .catch(() => {
        state = setConnected(state, false);
        push();
      });
  };
  poll();
  setInterval(poll, POLL_INTERVAL_MS);
}

main();
