import { describe, expect, it } from "vitest";
import { ConsoleClient, type SocketLike } from "../src/client";
import { ConsoleStore } from "../src/store";
import type { Frame } from "../src/protocol";

function dataFrame(topic: string, payload: Record<string, unknown>, seq = 1): Frame {
  return { type: "data", envelope: { topic, seq, stamp: 0, payload } };
}

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.onclose?.();
  }
  receive(frame: Frame): void {
    this.onmessage?.({ data: JSON.stringify(frame) });
  }
}

function pairedClient(): { client: ConsoleClient; socket: FakeSocket; store: ConsoleStore } {
  const socket = new FakeSocket();
  const store = new ConsoleStore();
  const client = new ConsoleClient("ws://test", "bot", store, {
    socketFactory: () => socket,
  });
  client.connect();
  socket.onopen?.();
  socket.receive({ type: "paired" });
  client.stopHeartbeats(); // keep `sent` deterministic for assertions
  return { client, socket, store };
}

describe("mode badge", () => {
  it("tracks acknowledged telemetry only, never the request", () => {
    const { client, socket, store } = pairedClient();
    client.setAutonomy("autonomous");
    expect(store.badge).toBe("–"); // no optimistic flip
    expect(store.pendingMode).toBe("autonomous");
    socket.receive(dataFrame("/telemetry/mode", { level: "autonomous" }));
    expect(store.badge).toBe("autonomous");
    expect(store.pendingMode).toBeNull();
  });

  it("never disagrees with the last acknowledgment", () => {
    const { socket, store } = pairedClient();
    socket.receive(dataFrame("/telemetry/mode", { level: "manual" }, 1));
    socket.receive(dataFrame("/telemetry/mode", { level: "assisted_steer" }, 2));
    expect(store.badge).toBe("assisted_steer");
  });
});

describe("command guard", () => {
  it("emits nothing while not paired", () => {
    const socket = new FakeSocket();
    const client = new ConsoleClient("ws://test", "bot", undefined, {
      socketFactory: () => socket,
    });
    client.connect();
    socket.onopen?.(); // connect frame allowed; no pairing yet
    const before = socket.sent.length;
    expect(client.setLamp(true)).toBeNull();
    expect(client.setAutonomy("manual")).toBeNull();
    expect(client.clickDriveTarget(1.0, 0.0).ok).toBe(false);
    expect(socket.sent.length).toBe(before);
  });

  it("assigns strictly increasing sequence numbers", () => {
    const { client } = pairedClient();
    const a = client.setLamp(true)!;
    const b = client.setVelocity(0.2, 0)!;
    const c = client.setLamp(false)!;
    expect(a.seq).toBeLessThan(b.seq);
    expect(b.seq).toBeLessThan(c.seq);
  });
});

describe("lamp indicator", () => {
  it("distinguishes watchdog forced-off from a user off", () => {
    const { socket, store } = pairedClient();
    socket.receive(dataFrame("/telemetry/lamp", { on: true, forced_off: false }));
    expect(store.lampState).toBe("on");
    socket.receive(dataFrame("/telemetry/lamp", { on: false, forced_off: false }));
    expect(store.lampState).toBe("off");
    socket.receive(dataFrame("/telemetry/lamp", { on: false, forced_off: true }));
    expect(store.lampState).toBe("forced_off");
  });
});

describe("staleness", () => {
  it("shows a degraded link after two seconds without telemetry", () => {
    let now = 0;
    const socket = new FakeSocket();
    const store = new ConsoleStore(() => now);
    const client = new ConsoleClient("ws://test", "bot", store, {
      socketFactory: () => socket,
    });
    client.connect();
    socket.onopen?.();
    socket.receive({ type: "paired" });
    client.stopHeartbeats();
    socket.receive(dataFrame("/telemetry/pose", { x: 0, y: 0, theta: 0 }));
    expect(store.stale).toBe(false);
    now = 2500;
    expect(store.stale).toBe(true);
    socket.receive(dataFrame("/telemetry/pose", { x: 0, y: 0, theta: 0 }, 2));
    expect(store.stale).toBe(false);
  });
});

describe("drive target clicks", () => {
  it("refuses targets beyond the manual range without sending", () => {
    const { client, socket, store } = pairedClient();
    socket.receive(dataFrame("/telemetry/mode", { level: "manual" }));
    const before = client.sentLog.length;
    const result = client.clickDriveTarget(4.0, 0.0);
    expect(result.ok).toBe(false);
    expect(result.point).toEqual({ x: 4.0, y: 0.0 }); // rendered red
    expect(client.sentLog.length).toBe(before);
    expect(store.paired).toBe(true);
  });

  it("sends robot-frame coordinates inside the range", () => {
    const { client, socket } = pairedClient();
    socket.receive(dataFrame("/telemetry/mode", { level: "assisted_decel" }));
    const result = client.clickDriveTarget(1.2, -0.4);
    expect(result.ok).toBe(true);
    expect(result.sent!.topic).toBe("/cmd/manual_target");
    expect(result.sent!.payload).toEqual({ x: 1.2, y: -0.4 });
  });
});

describe("map goal clicks", () => {
  it("prompts for a mode switch instead of sending in manual", () => {
    const { client, socket } = pairedClient();
    socket.receive(dataFrame("/telemetry/mode", { level: "manual" }));
    const width = 20;
    const height = 10;
    const cells = Buffer.from(new Uint8Array(width * height)).toString("base64");
    socket.receive(
      dataFrame("/telemetry/map", {
        width,
        height,
        resolution: 0.1,
        origin: { x: 0, y: 0, theta: 0 },
        cells,
      })
    );
    const before = client.sentLog.length;
    const result = client.clickMapGoal(5, 5);
    expect(result.ok).toBe(false);
    expect(result.reason).toMatch(/autonomous/);
    expect(client.sentLog.length).toBe(before);
  });

  it("ignores clicks outside the raster", () => {
    const { client, socket } = pairedClient();
    socket.receive(dataFrame("/telemetry/mode", { level: "autonomous" }));
    const cells = Buffer.from(new Uint8Array(200)).toString("base64");
    socket.receive(
      dataFrame("/telemetry/map", {
        width: 20,
        height: 10,
        resolution: 0.1,
        origin: { x: 0, y: 0, theta: 0 },
        cells,
      })
    );
    expect(client.clickMapGoal(-3, 5).ok).toBe(false);
    expect(client.clickMapGoal(25, 5).ok).toBe(false);
  });
});
