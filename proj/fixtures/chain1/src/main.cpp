// Diamond with a shared virtual base.
class A {
public:
  int a;
  virtual void af() { a++; }
};
class B : public virtual A {
public:
  int b;
  virtual void bf() { b++; }
};
class C : public virtual A {
public:
  int c;
  virtual void cf() { c++; }
};
class D : public B, public C {
public:
  int d;
  virtual void df() { d++; }
};

int main() {
  A *a = new A();
  B *b = new B();
  C *c = new C();
  D *d = new D();
  a->af();
  b->bf();
  c->cf();
  d->df();
  return 0;
}
