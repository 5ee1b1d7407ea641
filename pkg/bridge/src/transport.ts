/**
 * NDJSON transports: a spawned sidecar subprocess (stdio) or a TCP socket.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import net from "node:net";
import { createInterface, type Interface } from "node:readline";

export interface Transport {
  send(line: string): void;
  onLine(handler: (line: string) => void): void;
  onClose(handler: (reason: string) => void): void;
  close(): void;
}

export class StdioTransport implements Transport {
  private child: ChildProcessWithoutNullStreams;
  private reader: Interface;
  private lineHandlers: Array<(line: string) => void> = [];
  private closeHandlers: Array<(reason: string) => void> = [];
  private stderrTail: string[] = [];

  constructor(command: string, args: string[]) {
    this.child = spawn(command, args, { stdio: ["pipe", "pipe", "pipe"] });
    this.reader = createInterface({ input: this.child.stdout });
    this.reader.on("line", (line) => {
      for (const handler of this.lineHandlers) handler(line);
    });
    this.child.stderr.on("data", (chunk: Buffer) => {
      this.stderrTail.push(chunk.toString("utf-8"));
      if (this.stderrTail.length > 20) this.stderrTail.shift();
    });
    this.child.on("error", (err) => {
      for (const handler of this.closeHandlers) handler(`spawn failed: ${err.message}`);
    });
    this.child.on("exit", (code) => {
      const detail = this.stderrTail.join("").trim();
      for (const handler of this.closeHandlers) {
        handler(`sidecar exited with code ${code}${detail ? `: ${detail}` : ""}`);
      }
    });
  }

  send(line: string): void {
    this.child.stdin.write(line + "\n");
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandlers.push(handler);
  }

  onClose(handler: (reason: string) => void): void {
    this.closeHandlers.push(handler);
  }

  close(): void {
    this.child.stdin.end();
    this.child.kill();
  }
}

export class TcpTransport implements Transport {
  private socket: net.Socket;
  private reader: Interface;
  private lineHandlers: Array<(line: string) => void> = [];
  private closeHandlers: Array<(reason: string) => void> = [];

  constructor(host: string, port: number) {
    this.socket = net.createConnection({ host, port });
    this.reader = createInterface({ input: this.socket });
    this.reader.on("line", (line) => {
      for (const handler of this.lineHandlers) handler(line);
    });
    this.socket.on("error", (err) => {
      for (const handler of this.closeHandlers) handler(`socket error: ${err.message}`);
    });
    this.socket.on("close", () => {
      for (const handler of this.closeHandlers) handler("socket closed");
    });
  }

  send(line: string): void {
    this.socket.write(line + "\n");
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandlers.push(handler);
  }

  onClose(handler: (reason: string) => void): void {
    this.closeHandlers.push(handler);
  }

  close(): void {
    this.socket.destroy();
  }
}
