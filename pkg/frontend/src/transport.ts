/** WebSocket session transport with automatic reconnection. */

import type { ControlMessage } from "./types.js";
import { decodeFrame } from "./frames.js";
import type { GeometryFrame } from "./types.js";

/** Minimal WebSocket surface so tests can substitute a fake. */
export interface SocketLike {
  binaryType: string;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface TransportEvents {
  control: (msg: ControlMessage) => void;
  frame: (frame: GeometryFrame) => void;
  open: () => void;
  /** Fired after the socket dropped and a fresh one opened. */
  reconnected: () => void;
  down: () => void;
}

export class SessionTransport {
  private socket: SocketLike | null = null;
  private closed = false;
  private everOpened = false;
  private listeners: { [K in keyof TransportEvents]: TransportEvents[K][] } = {
    control: [],
    frame: [],
    open: [],
    reconnected: [],
    down: [],
  };

  constructor(
    private url: string,
    private factory: SocketFactory,
    private reconnectDelayMs = 500,
    private schedule: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  on<K extends keyof TransportEvents>(event: K, fn: TransportEvents[K]): void {
    this.listeners[event].push(fn);
  }

  private emit<K extends keyof TransportEvents>(
    event: K,
    ...args: Parameters<TransportEvents[K]>
  ): void {
    for (const fn of this.listeners[event]) {
      (fn as (...a: unknown[]) => void)(...args);
    }
  }

  connect(): void {
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.binaryType = "arraybuffer";
    sock.onopen = () => {
      const again = this.everOpened;
      this.everOpened = true;
      this.emit("open");
      if (again) this.emit("reconnected");
    };
    sock.onmessage = (ev: { data: unknown }) => {
      if (typeof ev.data === "string") {
        this.emit("control", JSON.parse(ev.data) as ControlMessage);
      } else {
        this.emit("frame", decodeFrame(ev.data as ArrayBuffer));
      }
    };
    sock.onclose = () => {
      if (this.closed) return;
      this.emit("down");
      this.schedule(() => {
        if (!this.closed) this.connect();
      }, this.reconnectDelayMs);
    };
    sock.onerror = () => {
      /* onclose follows; nothing to do */
    };
  }

  send(msg: { type: string; [key: string]: unknown }): void {
    this.socket?.send(JSON.stringify(msg));
  }

  startSession(landmark: number): void {
    this.send({ type: "start", landmark });
  }

  drag(target: [number, number]): void {
    this.send({ type: "drag", target });
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
