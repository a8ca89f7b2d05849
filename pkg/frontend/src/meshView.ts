/** WebGL viewport: indexed triangles, flat-ish shading, orbit camera. */

import { boundingRadius, computeNormals, orbitView, perspective } from "./geometry.js";
import type { MeshBuffers } from "./viewstate.js";

const VERT = `
attribute vec3 position;
attribute vec3 normal;
uniform mat4 view;
uniform mat4 proj;
varying vec3 vNormal;
void main() {
  vNormal = normal;
  gl_Position = proj * view * vec4(position, 1.0);
}`;

const FRAG = `
precision mediump float;
varying vec3 vNormal;
void main() {
  vec3 n = normalize(vNormal);
  vec3 light = normalize(vec3(0.4, 0.3, 0.85));
  float diffuse = max(dot(n, light), 0.0);
  float back = max(dot(n, -light), 0.0) * 0.25;
  vec3 base = vec3(0.35, 0.52, 0.78);
  vec3 color = base * (0.25 + 0.75 * diffuse + back);
  gl_FragColor = vec4(color, 1.0);
}`;

export class MeshView {
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private positionBuf: WebGLBuffer;
  private normalBuf: WebGLBuffer;
  private indexBuf: WebGLBuffer;
  private indexCount = 0;
  private lastRevision = -1;
  azimuth = 0.7;
  elevation = 0.5;
  distance = 3;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL unavailable");
    this.gl = gl;
    this.program = this.buildProgram();
    this.positionBuf = gl.createBuffer()!;
    this.normalBuf = gl.createBuffer()!;
    this.indexBuf = gl.createBuffer()!;
    gl.enable(gl.DEPTH_TEST);

    let draggingCam = false;
    let last: [number, number] = [0, 0];
    canvas.addEventListener("pointerdown", (ev) => {
      draggingCam = true;
      last = [ev.clientX, ev.clientY];
    });
    window.addEventListener("pointermove", (ev) => {
      if (!draggingCam) return;
      this.azimuth -= (ev.clientX - last[0]) * 0.01;
      this.elevation = Math.max(
        -1.4,
        Math.min(1.4, this.elevation + (ev.clientY - last[1]) * 0.01),
      );
      last = [ev.clientX, ev.clientY];
    });
    window.addEventListener("pointerup", () => {
      draggingCam = false;
    });
  }

  private buildProgram(): WebGLProgram {
    const gl = this.gl;
    const compile = (kind: number, src: string) => {
      const sh = gl.createShader(kind)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? "shader compile failed");
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl.VERTEX_SHADER, VERT));
    gl.attachShader(prog, compile(gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? "program link failed");
    }
    return prog;
  }

  /** Upload fresh buffers when the mesh revision changed, then draw. */
  render(mesh: MeshBuffers | null, revision: number): void {
    const gl = this.gl;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0.97, 0.98, 1.0, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (!mesh) return;

    if (revision !== this.lastRevision) {
      this.lastRevision = revision;
      const normals = computeNormals(mesh.positions, mesh.faces);
      gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuf);
      gl.bufferData(gl.ARRAY_BUFFER, mesh.positions, gl.DYNAMIC_DRAW);
      gl.bindBuffer(gl.ARRAY_BUFFER, this.normalBuf);
      gl.bufferData(gl.ARRAY_BUFFER, normals, gl.DYNAMIC_DRAW);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuf);
      gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, mesh.faces, gl.DYNAMIC_DRAW);
      this.indexCount = mesh.faces.length;
      this.distance = Math.max(2.2 * boundingRadius(mesh.positions), 0.5);
    }

    gl.useProgram(this.program);
    const posLoc = gl.getAttribLocation(this.program, "position");
    const nrmLoc = gl.getAttribLocation(this.program, "normal");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuf);
    gl.enableVertexAttribArray(posLoc);
    gl.vertexAttribPointer(posLoc, 3, gl.FLOAT, false, 0, 0);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.normalBuf);
    gl.enableVertexAttribArray(nrmLoc);
    gl.vertexAttribPointer(nrmLoc, 3, gl.FLOAT, false, 0, 0);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.indexBuf);

    const aspect = this.canvas.width / Math.max(this.canvas.height, 1);
    gl.uniformMatrix4fv(
      gl.getUniformLocation(this.program, "proj"), false,
      perspective(0.9, aspect, 0.01, 100),
    );
    gl.uniformMatrix4fv(
      gl.getUniformLocation(this.program, "view"), false,
      orbitView(this.azimuth, this.elevation, this.distance),
    );
    const ext = gl.getExtension("OES_element_index_uint");
    if (!ext) throw new Error("OES_element_index_uint unsupported");
    gl.drawElements(gl.TRIANGLES, this.indexCount, gl.UNSIGNED_INT, 0);
  }
}
